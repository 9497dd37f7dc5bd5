# ./app/services/rerank_service.py
# Reranking de listas N-best: extração de características, combinação linear
# e ajuste de pesos por MERT (busca em linha exata por coordenada).

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from app.errors import ConfigError, DiverseDecodingError, InputError, StateError
from app.models.features import FeatureVector, FeatureWeights
from app.models.vocabulary import strip_trailing_eos
from app.services.metrics_service import BleuStats, bleu_from_stats, bleu_stats, sentence_bleu_smoothed
from app.services.seqmodel_service import sequence_logprob

logger = logging.getLogger(__name__)


# --- Características ---

def tfidf_avg(idf_table, output):
    """Média, por posição, de tf(token na saída) * idf(token); token desconhecido tem idf 0."""
    output = tuple(output)
    if not output:
        return 0.0
    tf = Counter(output)
    return sum(tf[token] * idf_table.get(token, 0.0) for token in output) / len(output)


def build_idf(documents):
    """idf = max(0, ln(N / (1 + df))) calculado sobre documentos tokenizados."""
    documents = [set(doc) for doc in documents]
    if not documents:
        raise InputError("Erro: nenhum documento para calcular idf.")
    n_docs = len(documents)
    df = Counter()
    for doc in documents:
        df.update(doc)
    return {token: max(0.0, math.log(n_docs / (1 + count))) for token, count in sorted(df.items())}


def extract_features(source, hypothesis, fwd_model, bwd_model, lm, idf_table=None, use_tfidf=False):
    """
    fwd_logp = log p(Y|X) com EOS; bwd_logp = log p(X|Y) no modelo reverso (X + EOS);
    length, lm_logp e tf-idf sobre o corpo sem EOS.
    """
    if use_tfidf and idf_table is None:
        raise ConfigError("Erro: tf-idf solicitado sem tabela idf.")
    if not hypothesis.finished:
        raise StateError("Erro: só hipóteses finalizadas podem ser reranqueadas.")
    source = tuple(source)
    body = strip_trailing_eos(hypothesis.tokens, fwd_model.eos_id)
    return FeatureVector(
        fwd_logp=sequence_logprob(fwd_model, source, hypothesis.tokens),
        bwd_logp=sequence_logprob(bwd_model, body, source + (bwd_model.eos_id,)),
        length=float(len(body)),
        lm_logp=sequence_logprob(lm, (), body),
        tfidf_avg=tfidf_avg(idf_table, body) if use_tfidf else None,
    )


def featurize_nbest(source, nbest, fwd_model, bwd_model, lm, idf_table=None, use_tfidf=False):
    return [(hyp, extract_features(source, hyp, fwd_model, bwd_model, lm, idf_table, use_tfidf))
            for hyp in nbest]


def check_compatible(fwd_model, bwd_model, lm):
    """O modelo reverso troca os vocabulários do direto; o LM usa o vocabulário do alvo."""
    if bwd_model.vocab != fwd_model.source_vocab or bwd_model.source_vocab != fwd_model.vocab:
        raise InputError("Erro: o modelo reverso não corresponde aos vocabulários do modelo direto.")
    if lm.vocab != fwd_model.vocab:
        raise InputError("Erro: o LM não usa o vocabulário do alvo do modelo direto.")


# --- Reranking linear ---

def _feature_matrix(entries, names):
    if not entries:
        return np.zeros((0, len(names)))
    feature_sets = {fv.names for _, fv in entries}
    if len(feature_sets) > 1:
        raise InputError("Erro: entradas da N-best com conjuntos de características diferentes.")
    present = set(next(iter(feature_sets)))
    if present != set(names):
        raise InputError(
            f"Erro: pesos para {sorted(names)} mas a N-best tem as características {sorted(present)}."
        )
    return np.stack([fv.as_array(names) for _, fv in entries])


def rerank_nbest(entries, weights):
    """Ordena (hipótese, características) por w·f decrescente; empates mantêm o rank original."""
    entries = list(entries)
    matrix = _feature_matrix(entries, weights.names)
    scores = matrix @ weights.as_array() if entries else np.zeros(0)
    order = sorted(range(len(entries)), key=lambda i: -scores[i])
    return [entries[i] for i in order]


# --- MERT ---

@dataclass
class DevItem:
    """Uma entrada do conjunto de ajuste: origem, N-best com características e referências."""
    source: Tuple[int, ...]
    entries: List[tuple]
    references: Tuple[Tuple[int, ...], ...]


@dataclass(frozen=True)
class MertConfig:
    restarts: int = 8
    max_iters: int = 10
    seed: int = 0
    breakpoint_cap: int = 10 ** 5
    grid_low: float = -5.0
    grid_high: float = 5.0
    grid_points: int = 101


@dataclass(frozen=True)
class MertStep:
    restart: int
    iteration: int
    feature: str
    value: float
    bleu: float


@dataclass
class MertResult:
    weights: FeatureWeights
    bleu: float
    init_bleu: float
    steps: List[MertStep] = field(default_factory=list)


class _DevMatrices:
    """Matrizes de características e estatísticas BLEU por hipótese, por lista."""

    def __init__(self, dev, names, eos_id):
        self.features = []
        self.stats = []
        for item in dev:
            if not item.entries:
                raise InputError("Erro: lista N-best vazia no conjunto de ajuste.")
            self.features.append(_feature_matrix(item.entries, names))
            self.stats.append([
                bleu_stats(strip_trailing_eos(hyp.tokens, eos_id), item.references)
                for hyp, _ in item.entries
            ])

    def select(self, w):
        """Top-1 por lista (argmax com desempate pelo menor rank)."""
        return [int(np.argmax(f @ w)) for f in self.features]

    def bleu(self, selection):
        total = BleuStats.zero()
        for stats, index in zip(self.stats, selection):
            total = total + stats[index]
        return bleu_from_stats(total)


def _upper_envelope(intercepts, slopes):
    """
    Segmentos (início, índice) do máximo de retas a + d*b quando d percorre a reta real.
    Em d -> -inf vence a menor inclinação; empates pelo maior intercepto e menor índice.
    """
    n = len(intercepts)
    current = min(range(n), key=lambda i: (slopes[i], -intercepts[i], i))
    segments = [(-math.inf, current)]
    x = -math.inf
    while True:
        best_x, best_i = None, None
        for i in range(n):
            if slopes[i] <= slopes[current]:
                continue
            xi = (intercepts[current] - intercepts[i]) / (slopes[i] - slopes[current])
            if xi <= x:
                continue
            if (best_x is None or xi < best_x or
                    (xi == best_x and (slopes[i], -i) > (slopes[best_i], -best_i))):
                best_x, best_i = xi, i
        if best_x is None:
            return segments
        segments.append((best_x, best_i))
        current, x = best_i, best_x


def _crossing_events(matrices, w, j):
    """
    Envelopes superiores por lista ao variar w_j (delta relativo ao valor atual)
    e os eventos de troca do top-1 ordenados. O BLEU de corpus é constante
    entre eventos consecutivos.
    """
    envelopes = []
    events = []
    for list_index, f in enumerate(matrices.features):
        segments = _upper_envelope(f @ w, f[:, j])
        envelopes.append(segments)
        events.extend((x, list_index, idx) for x, idx in segments[1:])
    return envelopes, sorted(events)


def _best_interval(matrices, envelopes, events):
    selection = [segments[0][1] for segments in envelopes]
    total = BleuStats.zero()
    for stats, index in zip(matrices.stats, selection):
        total = total + stats[index]

    best_bleu = bleu_from_stats(total)
    first_x = events[0][0] if events else 0.0
    best_delta = first_x - 1.0 if events else 0.0
    i = 0
    while i < len(events):
        x = events[i][0]
        while i < len(events) and events[i][0] == x:
            _, list_index, new_index = events[i]
            total = total - matrices.stats[list_index][selection[list_index]] + matrices.stats[list_index][new_index]
            selection[list_index] = new_index
            i += 1
        bleu = bleu_from_stats(total)
        if bleu > best_bleu:
            upper = events[i][0] if i < len(events) else x + 2.0
            best_bleu, best_delta = bleu, (x + upper) / 2.0
    return best_delta, best_bleu


def _grid_search(matrices, w, j, config):
    best_value, best_bleu = w[j], -1.0
    for value in np.linspace(config.grid_low, config.grid_high, config.grid_points):
        trial = w.copy()
        trial[j] = value
        bleu = matrices.bleu(matrices.select(trial))
        if bleu > best_bleu:
            best_value, best_bleu = float(value), bleu
    return best_value - w[j], best_bleu


def _optimize_from(matrices, start, names, config, restart, steps):
    w = start.copy()
    current = matrices.bleu(matrices.select(w))
    for iteration in range(config.max_iters):
        improved = False
        for j, name in enumerate(names):
            envelopes, events = _crossing_events(matrices, w, j)
            if len(events) > config.breakpoint_cap:
                logger.warning("MERT: %d quebras em '%s' excedem o limite; usando grade", len(events), name)
                delta, bleu = _grid_search(matrices, w, j, config)
            else:
                delta, bleu = _best_interval(matrices, envelopes, events)
            if bleu > current:
                trial = w.copy()
                trial[j] += delta
                # Confirma no ponto escolhido com a regra de seleção real
                confirmed = matrices.bleu(matrices.select(trial))
                if confirmed > current:
                    w, current, improved = trial, confirmed, True
                    steps.append(MertStep(restart, iteration, name, float(w[j]), current))
                    logger.info("MERT passo aceito: restart=%d iter=%d %s=%.6f BLEU=%.4f",
                                restart, iteration, name, w[j], current)
        if not improved:
            break
    return w, current


def mert_tune(dev, init, config=None, eos_id=None):
    """
    Ajusta pesos lineares maximizando o BLEU de corpus do top-1 em dev.
    O primeiro restart parte de init e só aceita melhorias estritas, logo
    BLEU(retornado) >= BLEU(init).
    """
    config = config or MertConfig()
    dev = list(dev)
    if not dev:
        raise InputError("Erro: conjunto de ajuste vazio.")
    if eos_id is None:
        raise InputError("Erro: eos_id é necessário para remover EOS das hipóteses.")
    names = init.names
    matrices = _DevMatrices(dev, names, eos_id)
    rng = np.random.default_rng(config.seed)

    init_w = init.as_array()
    init_bleu = matrices.bleu(matrices.select(init_w))
    best_w, best_bleu = init_w, init_bleu
    steps = []
    for restart in range(config.restarts):
        start = init_w if restart == 0 else rng.uniform(-1.0, 1.0, size=len(names))
        w, bleu = _optimize_from(matrices, start, names, config, restart, steps)
        if bleu > best_bleu:
            best_w, best_bleu = w, bleu
    logger.info("MERT concluído: BLEU inicial=%.4f final=%.4f passos=%d", init_bleu, best_bleu, len(steps))
    return MertResult(weights=FeatureWeights(names, tuple(best_w)), bleu=best_bleu,
                      init_bleu=init_bleu, steps=steps)


def selection_bleu(dev, weights, eos_id):
    """BLEU de corpus do top-1 reranqueado."""
    matrices = _DevMatrices(list(dev), weights.names, eos_id)
    return matrices.bleu(matrices.select(weights.as_array()))


def oracle_bleu(dev, eos_id):
    """BLEU de corpus escolhendo, em cada lista, a hipótese de maior BLEU de sentença."""
    total = BleuStats.zero()
    for item in dev:
        bodies = [strip_trailing_eos(hyp.tokens, eos_id) for hyp, _ in item.entries]
        best = max(range(len(bodies)),
                   key=lambda i: (max(sentence_bleu_smoothed(bodies[i], ref) for ref in item.references), -i))
        total = total + bleu_stats(bodies[best], item.references)
    return bleu_from_stats(total)


# --- Persistência ---

def write_featurized(featurized, vocab, path):
    """Um registro por hipótese: origem, rank, mapa de características e texto."""
    with open(path, 'w', encoding='utf-8') as fh:
        for source_index, entries in enumerate(featurized):
            for rank, (hyp, fv) in enumerate(entries, start=1):
                record = {
                    'source_index': source_index,
                    'rank': rank,
                    'features': fv.to_dict(),
                    'text': vocab.detokenize(hyp.tokens),
                }
                fh.write(json.dumps(record, ensure_ascii=False) + '\n')


def save_weights(weights, path):
    with open(path, 'w', encoding='utf-8') as fh:
        json.dump(weights.to_dict(), fh, indent=1)
        fh.write('\n')


def load_weights(path):
    with open(path, encoding='utf-8') as fh:
        return FeatureWeights.from_dict(json.load(fh))


def save_idf(idf_table, path):
    with open(path, 'w', encoding='utf-8') as fh:
        json.dump(idf_table, fh, indent=1, ensure_ascii=False, sort_keys=True)
        fh.write('\n')


def load_idf(path):
    with open(path, encoding='utf-8') as fh:
        return {token: float(value) for token, value in json.load(fh).items()}


def idf_by_id(idf_table, vocab):
    """Converte uma tabela idf por superfície para ids do vocabulário."""
    table = {}
    for word, value in idf_table.items():
        idx = vocab.index(word)
        if idx is not None:
            table[idx] = value
    return table


def tune_weights_service(dev, names, config, eos_id):
    """Executa o MERT a partir do peso unitário em fwd_logp, retornando (resultado, erro)."""
    try:
        return mert_tune(dev, FeatureWeights.unit(names), config, eos_id=eos_id), None
    except DiverseDecodingError as e:
        logger.error("Falha no ajuste de pesos: %s", e)
        return None, f"Erro no ajuste de pesos: {e}"
