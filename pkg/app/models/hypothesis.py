# ./app/models/hypothesis.py
# Estado da busca em feixe: hipóteses, candidatos, parâmetros e lista N-best.

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from app.errors import ParameterError

SELECTION_MODES = ('auto', 'vanilla', 'diverse')


@dataclass(frozen=True)
class Hypothesis:
    """Sequência parcial ou completa com o escore acumulado S = log p(tokens | X)."""
    tokens: Tuple[int, ...]
    score: float
    finished: bool = False
    rank_trace: Tuple[int, ...] = ()

    @property
    def length(self):
        """Tamanho do corpo (sem o EOS final)."""
        return len(self.tokens) - 1 if self.finished else len(self.tokens)

    def to_dict(self):
        return {
            'tokens': list(self.tokens),
            'score': self.score,
            'finished': self.finished,
            'rank_trace': list(self.rank_trace),
        }


@dataclass(frozen=True)
class Candidate:
    """
    Expansão de um pai: rank é k' (1 = filho mais provável entre os irmãos).
    score é o S da equação de expansão; penalized é S - gamma * k'.
    """
    parent_index: int
    rank: int
    token: int
    score: float
    penalized: float
    parent: Hypothesis = field(repr=False, compare=False, default=None)

    def to_hypothesis(self, eos_id):
        parent_tokens = self.parent.tokens if self.parent is not None else ()
        trace = self.parent.rank_trace if self.parent is not None else ()
        return Hypothesis(
            tokens=parent_tokens + (self.token,),
            score=self.score,
            finished=self.token == eos_id,
            rank_trace=trace + (self.rank,),
        )


@dataclass(frozen=True)
class DecodeParams:
    """
    Parâmetros do decodificador. min_len/max_len explícitos sobrepõem os
    limites derivados da origem (min_ratio * |X|, max_ratio * |X|).
    nbest_cap None mantém na N-best tantas hipóteses quanto o tamanho do feixe.
    """
    beam_size: int = 10
    gamma: float = 0.0
    min_len: Optional[int] = None
    max_len: Optional[int] = None
    min_ratio: float = 0.75
    max_ratio: float = 1.5
    nbest_cap: Optional[int] = None
    selection: str = 'auto'

    def __post_init__(self):
        if self.beam_size < 1:
            raise ParameterError(f"Erro: beam_size deve ser >= 1 (recebido {self.beam_size}).")
        if self.gamma < 0 or not math.isfinite(self.gamma):
            raise ParameterError(f"Erro: gamma deve ser finito e >= 0 (recebido {self.gamma}).")
        if self.nbest_cap is not None and self.nbest_cap < 1:
            raise ParameterError(f"Erro: nbest_cap deve ser >= 1 (recebido {self.nbest_cap}).")
        if self.selection not in SELECTION_MODES:
            raise ParameterError(f"Erro: modo de seleção desconhecido '{self.selection}'.")

    @property
    def use_diverse(self):
        if self.selection == 'auto':
            return self.gamma != 0
        return self.selection == 'diverse'

    @property
    def nbest_limit(self):
        return self.beam_size if self.nbest_cap is None else self.nbest_cap

    def length_bounds(self, source_length):
        """(min_len, max_len) do corpo, com arredondamento floor/ceil sobre as razões."""
        min_len = self.min_len
        max_len = self.max_len
        if min_len is None or max_len is None:
            if source_length < 1:
                raise ParameterError("Erro: origem vazia exige min_len e max_len explícitos.")
            if min_len is None:
                min_len = max(1, math.floor(self.min_ratio * source_length))
            if max_len is None:
                max_len = math.ceil(self.max_ratio * source_length)
        if max_len < 1:
            raise ParameterError(f"Erro: max_len deve ser >= 1 (recebido {max_len}).")
        if min_len < 1 or min_len > max_len:
            raise ParameterError(f"Erro: limites inválidos min_len={min_len}, max_len={max_len}.")
        return min_len, max_len

    def with_gamma(self, gamma):
        return DecodeParams(
            beam_size=self.beam_size, gamma=gamma, min_len=self.min_len,
            max_len=self.max_len, min_ratio=self.min_ratio, max_ratio=self.max_ratio,
            nbest_cap=self.nbest_cap, selection=self.selection,
        )


def nbest_sort_key(hypothesis):
    """Maior escore primeiro; empate: sequência de ids lexicograficamente menor."""
    return (-hypothesis.score, hypothesis.tokens)


@dataclass
class NBestList:
    """Hipóteses finalizadas ordenadas por S decrescente, sem sequências repetidas."""
    entries: List[Hypothesis] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def failed(self):
        return not self.entries

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, index):
        return self.entries[index]

    @property
    def top(self):
        return self.entries[0] if self.entries else None

    @classmethod
    def from_hypotheses(cls, hypotheses, cap=None):
        unique = {}
        for hyp in hypotheses:
            current = unique.get(hyp.tokens)
            if current is None or hyp.score > current.score:
                unique[hyp.tokens] = hyp
        ordered = sorted(unique.values(), key=nbest_sort_key)
        if cap is not None:
            ordered = ordered[:cap]
        return cls(entries=ordered)

    def to_dict(self):
        return {
            'entries': [h.to_dict() for h in self.entries],
            'error': self.error,
        }
