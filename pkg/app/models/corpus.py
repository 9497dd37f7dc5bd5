# ./app/models/corpus.py
# Corpus paralelo tokenizado por espaço em branco.

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from app.errors import InputError

SPLITS = ('train', 'dev', 'test')


@dataclass(frozen=True)
class SentencePair:
    source: Tuple[str, ...]
    target: Tuple[str, ...]
    split: Optional[str] = None

    def to_dict(self):
        data = {'source': ' '.join(self.source), 'target': ' '.join(self.target)}
        if self.split is not None:
            data['split'] = self.split
        return data


@dataclass
class ParallelCorpus:
    """Pares (origem, alvo) tokenizados; nenhum lado vazio."""
    pairs: List[SentencePair] = field(default_factory=list)

    def __post_init__(self):
        for index, pair in enumerate(self.pairs, start=1):
            if not pair.source or not pair.target:
                raise InputError(f"Erro: par {index} com lado vazio após tokenização.")
            if pair.split is not None and pair.split not in SPLITS:
                raise InputError(f"Erro: split desconhecido '{pair.split}' no par {index}.")

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __repr__(self):
        return f"<ParallelCorpus {len(self.pairs)} pares>"

    @property
    def sources(self):
        return [p.source for p in self.pairs]

    @property
    def targets(self):
        return [p.target for p in self.pairs]

    def split(self, name):
        return ParallelCorpus([p for p in self.pairs if p.split == name])
