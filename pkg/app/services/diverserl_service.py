# ./app/services/diverserl_service.py
# Aprendizado da taxa de diversidade por entrada: REINFORCE com baseline
# aprendido, reajuste periódico dos pesos do reranker e varredura de gamma fixo.

import json
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from app.errors import DiverseDecodingError, InputError
from app.models.features import FeatureWeights
from app.models.policy import (BaselineEstimator, DiversityPolicy, FeatureStandardizer,
                               RetuneEvent, RewardRecord)
from app.models.vocabulary import strip_trailing_eos
from app.services.decoder_service import batch_decode, decode
from app.services.metrics_service import EvalPair, corpus_bleu, sentence_bleu_smoothed
from app.services.rerank_service import DevItem, MertConfig, featurize_nbest, mert_tune, rerank_nbest
from app.services.seqmodel_service import sequence_logprob

logger = logging.getLogger(__name__)

FEATURE_DIM = 6
TOP_BAND_FRACTION = 0.1


# --- Representação da origem ---

class SourceFeaturizer:
    """
    h_X = [1, |X|, |X|^2, log-prob média por token no LM, razão tipo/token,
    fração de tokens na faixa de 10% mais frequentes], padronizado (exceto o viés).
    """

    def __init__(self, lm, vocab=None, standardizer=None):
        self.lm = lm
        self.vocab = vocab or lm.vocab
        self.standardizer = standardizer
        counts = lm.unigram_counts()
        candidates = [tok for tok in range(self.vocab.size) if tok != self.vocab.eos_id]
        band = max(1, math.ceil(TOP_BAND_FRACTION * len(candidates)))
        ranked = sorted(candidates, key=lambda tok: (-counts[tok], tok))
        self.frequent = frozenset(ranked[:band])

    def raw(self, source):
        source = tuple(source)
        n = len(source)
        if n == 0:
            return np.array([1.0, 0.0, 0.0, 0.0, 0.0, 0.0])
        mean_logprob = sequence_logprob(self.lm, (), source) / n
        type_token = len(set(source)) / n
        frequent = sum(1 for tok in source if tok in self.frequent) / n
        return np.array([1.0, float(n), float(n * n), mean_logprob, type_token, frequent])

    def __call__(self, source):
        raw = self.raw(source)
        if self.standardizer is None:
            return raw
        return self.standardizer.apply(raw)

    def fit(self, sources):
        """Ajusta a padronização nas origens do conjunto de desenvolvimento."""
        self.standardizer = FeatureStandardizer.fit([self.raw(s) for s in sources])
        return self.standardizer


def featurize_source(source, lm, vocab=None, standardizer=None):
    return SourceFeaturizer(lm, vocab, standardizer)(source)


# --- Política ---

def policy_probs(policy, h):
    """Distribuição softmax sobre a grade de gamma para a origem h."""
    return policy.probs(h)


def _rng(seed_or_rng):
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def sample_action(policy, h, rng_seed):
    """Amostra categórica de pi(. | h); reprodutível para a mesma semente."""
    probs = policy_probs(policy, h)
    return int(_rng(rng_seed).choice(len(probs), p=probs))


def choose_gamma(policy, h):
    """Ação gulosa usada na inferência: índice de maior probabilidade."""
    return int(np.argmax(policy.logits(h)))


@dataclass
class ReinforceUpdate:
    policy: DiversityPolicy
    baseline: BaselineEstimator
    advantage: float
    baseline_value: float
    accepted: bool = True


def reinforce_step(policy, baseline, h, action, reward, lr_policy, lr_baseline):
    """
    theta += lr_policy * (R - b) * grad log pi(action | h); o baseline recebe um
    passo em (R - b)^2 sem propagar erro para a política.
    """
    h = policy.check_dim(h)
    b = baseline.predict(h)
    if not math.isfinite(reward) or not math.isfinite(b):
        logger.warning("Atualização REINFORCE rejeitada: recompensa=%r baseline=%r", reward, b)
        return ReinforceUpdate(policy, baseline, float('nan'), b, accepted=False)
    advantage = reward - b
    updated = policy.copy()
    if advantage != 0.0:
        d_projection, d_embeddings = policy.grad_log_prob(h, action)
        updated.projection += lr_policy * advantage * d_projection
        updated.embeddings += lr_policy * advantage * d_embeddings
    return ReinforceUpdate(updated, baseline.updated(h, reward, lr_baseline), advantage, b)


# --- Treinamento ---

@dataclass(frozen=True)
class TrainingSchedule:
    num_instances: int = 1000
    retune_every: int = 10000
    lr_policy: float = 0.1
    lr_baseline: float = 0.01
    seed: int = 0


@dataclass
class RerankSetup:
    """Reranking durante o treino: modelos auxiliares, pesos atuais e dev para o MERT."""
    bwd_model: object
    lm: object
    weights: FeatureWeights
    dev: List[tuple] = field(default_factory=list)
    idf_table: Optional[dict] = None
    use_tfidf: bool = False
    mert: MertConfig = field(default_factory=MertConfig)


@dataclass
class TrainingResult:
    policy: DiversityPolicy
    baseline: BaselineEstimator
    log: List = field(default_factory=list)
    weights: Optional[FeatureWeights] = None

    @property
    def rewards(self):
        return [entry for entry in self.log if isinstance(entry, RewardRecord)]

    @property
    def retunes(self):
        return [entry for entry in self.log if isinstance(entry, RetuneEvent)]


def pick_output(model, source, nbest, rerank=None, weights=None):
    """Melhor saída: maior escore do reranker, ou maior probabilidade sem reranking."""
    if rerank is None:
        return nbest.top
    entries = featurize_nbest(source, nbest, model, rerank.bwd_model, rerank.lm,
                              rerank.idf_table, rerank.use_tfidf)
    return rerank_nbest(entries, weights or rerank.weights)[0][0]


def decode_with_policy(model, sources, policy, featurizer, params, parallelism=1):
    """
    Decodifica cada origem com o gamma escolhido pela política (ação gulosa).
    Origens com o mesmo gamma são decodificadas em lote; a ordem é preservada.
    """
    sources = [tuple(s) for s in sources]
    gammas = [policy.grid[choose_gamma(policy, featurizer(s))] for s in sources]
    results = [None] * len(sources)
    for gamma in sorted(set(gammas)):
        indices = [i for i, g in enumerate(gammas) if g == gamma]
        decoded = batch_decode(model, [sources[i] for i in indices], params.with_gamma(gamma), parallelism)
        for i, nbest in zip(indices, decoded):
            results[i] = nbest
    return results, gammas


def _retune(model, policy, featurizer, params, rerank, weights, seed):
    """MERT nas N-best de dev decodificadas com o gamma modal da política atual."""
    items = []
    for source, references in rerank.dev:
        gamma = policy.grid[choose_gamma(policy, featurizer(source))]
        nbest = decode(model, source, params.with_gamma(gamma))
        if nbest.failed:
            continue
        entries = featurize_nbest(source, nbest, model, rerank.bwd_model, rerank.lm,
                                  rerank.idf_table, rerank.use_tfidf)
        items.append(DevItem(tuple(source), entries, tuple(tuple(r) for r in references)))
    if not items:
        logger.warning("Reajuste ignorado: nenhuma N-best de dev decodificada.")
        return weights, None
    mert = MertConfig(restarts=rerank.mert.restarts, max_iters=rerank.mert.max_iters, seed=seed,
                      breakpoint_cap=rerank.mert.breakpoint_cap)
    result = mert_tune(items, weights, mert, eos_id=model.eos_id)
    return result.weights, result.bleu


def train_policy(model, pairs, grid, params, schedule, featurizer, rerank=None, policy=None):
    """
    Para cada instância: representa a origem, amostra gamma, decodifica com os
    modelos congelados, escolhe a melhor saída, recompensa = BLEU de sentença
    suavizado e aplica o passo REINFORCE. A cada retune_every instâncias os pesos
    do reranker são reajustados em dev.
    """
    pairs = [(tuple(src), tuple(tgt)) for src, tgt in pairs]
    if not pairs:
        raise InputError("Erro: nenhum par de treino para a política.")
    if featurizer.standardizer is None:
        dev_sources = [src for src, _ in rerank.dev] if rerank and rerank.dev else [src for src, _ in pairs]
        featurizer.fit(dev_sources)

    policy = policy or DiversityPolicy.initial(grid, FEATURE_DIM, featurizer.standardizer)
    policy.standardizer = featurizer.standardizer
    baseline = BaselineEstimator.zeros(policy.feature_dim)
    weights = rerank.weights if rerank else None
    log = []

    for instance in range(schedule.num_instances):
        source_id = instance % len(pairs)
        source, target = pairs[source_id]
        h = featurizer(source)
        action = sample_action(policy, h, np.random.default_rng([schedule.seed, instance]))
        gamma = grid[action]
        nbest = decode(model, source, params.with_gamma(gamma))
        if nbest.failed:
            logger.warning("Instância %d (origem %d) ignorada: %s", instance, source_id, nbest.error)
        else:
            best = pick_output(model, source, nbest, rerank, weights)
            body = strip_trailing_eos(best.tokens, model.eos_id)
            reference = strip_trailing_eos(target, model.eos_id)
            reward = sentence_bleu_smoothed(body, reference)
            update = reinforce_step(policy, baseline, h, action, reward,
                                    schedule.lr_policy, schedule.lr_baseline)
            policy, baseline = update.policy, update.baseline
            log.append(RewardRecord(
                instance=instance, source_id=source_id, action=action, gamma=gamma,
                reward=reward, baseline=update.baseline_value,
                text=model.vocab.detokenize(best.tokens),
            ))

        if rerank is not None and (instance + 1) % schedule.retune_every == 0:
            weights, dev_bleu = _retune(model, policy, featurizer, params, rerank, weights,
                                        seed=schedule.seed + instance + 1)
            log.append(RetuneEvent(instance=instance, dev_bleu=dev_bleu if dev_bleu is not None else float('nan'),
                                   weights=tuple(weights.to_dict().items())))
            logger.info("Reajuste após %d instâncias: BLEU dev=%s", instance + 1, dev_bleu)

    return TrainingResult(policy=policy, baseline=baseline, log=log, weights=weights)


# --- Varredura de gamma fixo ---

@dataclass
class SweepResult:
    bleu_by_gamma: dict
    best_gamma: float


def sweep_gamma(model, pairs, grid, params, rerank=None, parallelism=1):
    """BLEU de corpus do top-1 para cada gamma fixo da grade; o melhor vence (empate: menor gamma)."""
    pairs = [(tuple(src), [tuple(r) for r in refs]) for src, refs in pairs]
    if not pairs:
        raise InputError("Erro: nenhum par para a varredura de gamma.")
    sources = [src for src, _ in pairs]
    bleu_by_gamma = {}
    for gamma in grid.values:
        results = batch_decode(model, sources, params.with_gamma(gamma), parallelism)
        eval_pairs = []
        for (source, refs), nbest in zip(pairs, results):
            best = pick_output(model, source, nbest, rerank) if not nbest.failed else None
            body = strip_trailing_eos(best.tokens, model.eos_id) if best else ()
            eval_pairs.append(EvalPair(body, [strip_trailing_eos(r, model.eos_id) for r in refs]))
        bleu_by_gamma[gamma] = corpus_bleu(eval_pairs)
        logger.info("gamma=%.2f BLEU=%.4f", gamma, bleu_by_gamma[gamma])
    best_gamma = max(grid.values, key=lambda g: (bleu_by_gamma[g], -g))
    return SweepResult(bleu_by_gamma=bleu_by_gamma, best_gamma=best_gamma)


# --- Persistência ---

def save_policy(policy, baseline, path):
    with open(path, 'w', encoding='utf-8') as fh:
        json.dump({'policy': policy.to_dict(), 'baseline': baseline.to_dict()}, fh, indent=1)
        fh.write('\n')


def load_policy(path):
    with open(path, encoding='utf-8') as fh:
        data = json.load(fh)
    return DiversityPolicy.from_dict(data['policy']), BaselineEstimator.from_dict(data['baseline'])


def write_training_log(log, path):
    with open(path, 'w', encoding='utf-8') as fh:
        for entry in log:
            fh.write(json.dumps(entry.to_dict(), ensure_ascii=False) + '\n')


def train_policy_service(*args, **kwargs):
    """Treina a política retornando (resultado, erro)."""
    try:
        return train_policy(*args, **kwargs), None
    except DiverseDecodingError as e:
        logger.error("Falha no treino da política: %s", e)
        return None, f"Erro no treino da política: {e}"
