# ./app/services/metrics_service.py
# Métricas de avaliação: BLEU de corpus (nltk), BLEU de sentença suavizado
# (recompensa), distinct-n e ROUGE-2 (revocação de bigramas).

import math
from collections import Counter
from dataclasses import dataclass
from typing import List, Tuple

from nltk.translate import bleu_score
from nltk.util import ngrams

from app.errors import InputError, ParameterError


@dataclass(frozen=True)
class EvalPair:
    """Hipótese (sem EOS) e uma ou mais referências."""
    hypothesis: Tuple
    references: Tuple[Tuple, ...]

    def __post_init__(self):
        object.__setattr__(self, 'hypothesis', tuple(self.hypothesis))
        object.__setattr__(self, 'references', tuple(tuple(r) for r in self.references))
        if not self.references:
            raise InputError("Erro: par de avaliação sem referência.")


@dataclass(frozen=True)
class BleuStats:
    """Estatísticas suficientes do BLEU: acertos e totais por ordem, |hip| e |ref|."""
    matches: Tuple[int, ...]
    totals: Tuple[int, ...]
    hyp_len: int
    ref_len: int

    def __add__(self, other):
        return BleuStats(
            matches=tuple(a + b for a, b in zip(self.matches, other.matches)),
            totals=tuple(a + b for a, b in zip(self.totals, other.totals)),
            hyp_len=self.hyp_len + other.hyp_len,
            ref_len=self.ref_len + other.ref_len,
        )

    def __sub__(self, other):
        return BleuStats(
            matches=tuple(a - b for a, b in zip(self.matches, other.matches)),
            totals=tuple(a - b for a, b in zip(self.totals, other.totals)),
            hyp_len=self.hyp_len - other.hyp_len,
            ref_len=self.ref_len - other.ref_len,
        )

    @classmethod
    def zero(cls, max_n=4):
        return cls(matches=(0,) * max_n, totals=(0,) * max_n, hyp_len=0, ref_len=0)


def ngram_counts(tokens, n):
    return Counter(ngrams(tokens, n))


def bleu_stats(hyp, refs, max_n=4):
    """
    Precisões modificadas (contagens recortadas pelo máximo entre referências).
    totals guarda o número real de n-gramas da hipótese (0 quando |hip| < n).
    """
    hyp = tuple(hyp)
    refs = [tuple(r) for r in refs]
    if not refs:
        raise InputError("Erro: BLEU exige ao menos uma referência.")
    matches = []
    totals = []
    for n in range(1, max_n + 1):
        total = max(0, len(hyp) - n + 1)
        # nltk devolve acertos / max(1, total)
        precision = bleu_score.modified_precision(refs, hyp, n)
        matches.append(int(precision * max(1, total)))
        totals.append(total)
    ref_len = bleu_score.closest_ref_length(refs, len(hyp))
    return BleuStats(tuple(matches), tuple(totals), len(hyp), ref_len)


def bleu_from_stats(stats):
    """BLEU em [0, 100]; qualquer precisão nula zera o escore."""
    if stats.hyp_len == 0:
        return 0.0
    log_sum = 0.0
    for m, t in zip(stats.matches, stats.totals):
        if m == 0 or t == 0:
            return 0.0
        log_sum += math.log(m / t)
    brevity = bleu_score.brevity_penalty(stats.ref_len, stats.hyp_len)
    return 100.0 * brevity * math.exp(log_sum / len(stats.matches))


def corpus_bleu(pairs, max_n=4):
    """BLEU de corpus do nltk (pesos uniformes) em [0, 100]."""
    pairs = list(pairs)
    if not pairs:
        raise InputError("Erro: conjunto de hipóteses vazio para BLEU.")
    total = BleuStats.zero(max_n)
    for pair in pairs:
        total = total + bleu_stats(pair.hypothesis, pair.references, max_n)
    # Sem suavização o nltk troca precisão nula por um valor ínfimo
    if total.hyp_len == 0 or 0 in total.matches:
        return 0.0
    score = bleu_score.corpus_bleu(
        [list(pair.references) for pair in pairs],
        [pair.hypothesis for pair in pairs],
        weights=(1.0 / max_n,) * max_n,
    )
    return 100.0 * score


def sentence_bleu_smoothed(hyp, ref, max_n=4):
    """
    BLEU de sentença em [0, 1]: p_1 sem suavização, p_n = (acertos + 1) / (total + 1)
    para n >= 2 (sem n-gramas: (0 + 1) / (0 + 1) = 1).
    """
    hyp = tuple(hyp)
    ref = tuple(ref)
    if not hyp:
        return 0.0
    stats = bleu_stats(hyp, [ref], max_n)
    if stats.matches[0] == 0:
        return 0.0
    log_sum = math.log(stats.matches[0] / stats.totals[0])
    for m, t in zip(stats.matches[1:], stats.totals[1:]):
        log_sum += math.log((m + 1) / (t + 1))
    return bleu_score.brevity_penalty(stats.ref_len, stats.hyp_len) * math.exp(log_sum / max_n)


def distinct_n(outputs, n):
    """n-gramas distintos em todas as saídas / total de tokens gerados."""
    if n < 1:
        raise ParameterError(f"Erro: n deve ser >= 1 (recebido {n}).")
    unique = set()
    total_tokens = 0
    for output in outputs:
        output = tuple(output)
        total_tokens += len(output)
        unique.update(ngram_counts(output, n))
    if total_tokens == 0:
        return 0.0
    return len(unique) / total_tokens


def rouge2(hyp, ref):
    """Revocação de bigramas recortada; referência com menos de 2 tokens vale 0."""
    ref_counts = ngram_counts(tuple(ref), 2)
    total = sum(ref_counts.values())
    if total == 0:
        return 0.0
    hyp_counts = ngram_counts(tuple(hyp), 2)
    matched = sum(min(count, hyp_counts[gram]) for gram, count in ref_counts.items())
    return matched / total


def corpus_rouge2(hyps: List, refs: List):
    """Média de ROUGE-2 por sentença."""
    if not hyps:
        raise InputError("Erro: conjunto de hipóteses vazio para ROUGE-2.")
    return sum(rouge2(h, r) for h, r in zip(hyps, refs)) / len(hyps)


METRICS = ('bleu', 'rouge2', 'distinct1', 'distinct2')


def evaluate(metric, hyps, refs=None):
    """Calcula uma métrica de corpus sobre hipóteses tokenizadas (uma por linha)."""
    hyps = [tuple(h) for h in hyps]
    if metric in ('distinct1', 'distinct2'):
        return distinct_n(hyps, int(metric[-1]))
    if metric not in METRICS:
        raise ParameterError(f"Erro: métrica desconhecida '{metric}' (use {', '.join(METRICS)}).")
    if refs is None:
        raise InputError(f"Erro: a métrica '{metric}' exige referências.")
    refs = [tuple(r) for r in refs]
    if len(refs) != len(hyps):
        raise InputError(f"Erro: {len(hyps)} hipóteses para {len(refs)} referências.")
    if metric == 'bleu':
        return corpus_bleu(EvalPair(h, [r]) for h, r in zip(hyps, refs))
    return corpus_rouge2(hyps, refs)
