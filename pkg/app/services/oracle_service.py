# ./app/services/oracle_service.py
# Autoverificação do decodificador sobre modelos tabulares aleatórios:
# equivalência gamma=0, oráculo exaustivo e dominância da penalidade.

import json
import logging
from dataclasses import dataclass, field, replace
from typing import List

import numpy as np

from app.errors import InputError
from app.models.hypothesis import Candidate, DecodeParams, Hypothesis
from app.models.tabular import TabularModel
from app.models.vocabulary import EOS_SURFACE, Vocabulary
from app.services.decoder_service import (DEFAULT_ENUMERATION_CAP, decode, exhaustive_argmax,
                                          nbest_records, select_diverse)

logger = logging.getLogger(__name__)

SCORE_TOLERANCE = 1e-9
# Limite de prefixos com distribuição própria; os demais usam a distribuição padrão
PREFIX_BUDGET = 2000
DOMINANCE_GAMMA = 1e6


@dataclass
class SuiteReport:
    name: str
    passed: int = 0
    total: int = 0
    failures: List[str] = field(default_factory=list)

    @property
    def ok(self):
        return self.passed == self.total

    def summary(self):
        return f"{self.passed}/{self.total} exact matches"

    def record(self, success, detail=None):
        self.total += 1
        if success:
            self.passed += 1
        else:
            self.failures.append(detail or f"caso {self.total}")
            logger.warning("[%s] divergência: %s", self.name, detail)


def synthetic_vocabulary(vocab_size):
    """Vocabulário w0..w{n-2} mais EOS no último id."""
    if vocab_size < 2:
        raise InputError("Erro: o vocabulário sintético precisa de ao menos 2 símbolos.")
    tokens = tuple(f"w{i}" for i in range(vocab_size - 1)) + (EOS_SURFACE,)
    return Vocabulary(tokens=tokens, eos_id=vocab_size - 1)


def _table_depth(body_symbols, max_len, budget):
    depth, total = 0, 1
    while depth < max_len and total + body_symbols ** (depth + 1) <= budget:
        depth += 1
        total += body_symbols ** depth
    return depth


def _prefixes(body_symbols, depth):
    level = [()]
    for _ in range(depth + 1):
        yield from level
        level = [p + (tok,) for p in level for tok in range(body_symbols)]


def random_tabular_model(rng, vocab_size, max_len, budget=PREFIX_BUDGET):
    """
    Modelo tabular com distribuições de Dirichlet(1) para todos os prefixos até a
    profundidade que cabe no orçamento (origem curinga). Prefixos mais longos
    usam a distribuição padrão.
    """
    vocab = synthetic_vocabulary(vocab_size)
    body_symbols = vocab_size - 1
    depth = _table_depth(body_symbols, max_len, budget)
    alpha = np.ones(vocab_size)
    entries = {(None, prefix): rng.dirichlet(alpha) for prefix in _prefixes(body_symbols, depth)}
    return TabularModel(vocab, vocab, entries, rng.dirichlet(alpha))


def _serialize(nbest, vocab):
    return '\n'.join(json.dumps(r, ensure_ascii=False) for r in nbest_records([nbest], vocab))


def gamma_zero_suite(num_models=200, seed=0, max_vocab=20, max_len_cap=8, beam_sizes=(2, 5, 10)):
    """Seleção penalizada com gamma=0 e seleção padrão produzem N-best idênticas."""
    report = SuiteReport('gamma=0')
    for index in range(num_models):
        rng = np.random.default_rng([seed, index])
        vocab_size = int(rng.integers(3, max_vocab + 1))
        max_len = int(rng.integers(1, max_len_cap + 1))
        beam = int(beam_sizes[index % len(beam_sizes)])
        model = random_tabular_model(rng, vocab_size, max_len)
        source = (0,)
        base = DecodeParams(beam_size=beam, gamma=0.0, min_len=1, max_len=max_len, nbest_cap=10 ** 6)
        vanilla = decode(model, source, replace(base, selection='vanilla'))
        diverse = decode(model, source, replace(base, selection='diverse'))
        same = _serialize(vanilla, model.vocab) == _serialize(diverse, model.vocab)
        report.record(same, f"modelo {index}: |V|={vocab_size} max_len={max_len} K={beam}")
    return report


def exhaustive_suite(num_models=50, vocab_size=5, max_len=5, seed=0, cap=DEFAULT_ENUMERATION_CAP):
    """Com o feixe comportando todos os prefixos vivos, o top-1 é o argmax exato."""
    report = SuiteReport('oráculo exaustivo')
    beam = (vocab_size - 1) ** max_len
    params = DecodeParams(beam_size=beam, min_len=1, max_len=max_len, nbest_cap=1)
    for index in range(num_models):
        rng = np.random.default_rng([seed, index])
        model = random_tabular_model(rng, vocab_size, max_len, budget=max(PREFIX_BUDGET, beam * vocab_size))
        source = (0,)
        top = decode(model, source, params).top
        best_seq, best_score = exhaustive_argmax(model, source, max_len, min_len=1, cap=cap)
        success = top is not None and top.tokens == best_seq and abs(top.score - best_score) <= SCORE_TOLERANCE
        report.record(success, f"modelo {index}: decode={top.tokens if top else None} oráculo={best_seq}")
    return report


def penalty_dominance_suite(num_steps=100, seed=0, max_beam=10, max_children=10, max_extra_parents=10):
    """
    Com gamma enorme e |S| < 100 a seleção fica com filhos de rank 1: com P >= K
    pais, exatamente os K pais cujo filho de rank 1 tem maior S, nessa ordem.
    """
    report = SuiteReport('dominância da penalidade')
    for index in range(num_steps):
        rng = np.random.default_rng([seed, index])
        beam = int(rng.integers(1, max_beam + 1))
        num_parents = beam + int(rng.integers(0, max_extra_parents + 1))
        children = int(rng.integers(2, max_children + 1))
        candidates = []
        best_child = []
        for parent_index in range(num_parents):
            parent = Hypothesis(tokens=(parent_index,), score=float(rng.uniform(-50.0, 0.0)))
            scores = parent.score + np.sort(rng.uniform(-49.0, 0.0, size=children))[::-1]
            tokens = rng.permutation(children)
            for rank, (token, score) in enumerate(zip(tokens, scores), start=1):
                candidates.append(Candidate(parent_index, rank, int(token), float(score),
                                            float(score) - DOMINANCE_GAMMA * rank, parent))
            best_child.append((-float(scores[0]), int(tokens[0]), parent_index))
        expected = [parent_index for _, _, parent_index in sorted(best_child)[:beam]]
        chosen = select_diverse(candidates, beam, DOMINANCE_GAMMA)
        ranks = [h.rank_trace[-1] for h in chosen]
        parents = [h.tokens[0] for h in chosen]
        report.record(ranks == [1] * beam and parents == expected,
                      f"passo {index}: K={beam} pais={num_parents}")
    return report


def run_oracle_check(models=50, vocab=5, maxlen=5, gamma_models=200, seed=0, cap=DEFAULT_ENUMERATION_CAP):
    """Executa as três suítes; retorna os relatórios na ordem de execução."""
    reports = [
        exhaustive_suite(models, vocab, maxlen, seed, cap),
        gamma_zero_suite(gamma_models, seed),
        penalty_dominance_suite(seed=seed),
    ]
    for report in reports:
        logger.info("[%s] %s", report.name, report.summary())
    return reports
