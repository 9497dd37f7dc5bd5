# ./app/services/seqmodel_service.py
# Operações sobre modelos de sequência: consulta, escore de sequência,
# treinamento (fusão, LM, modelo reverso) e persistência.

import json
import logging

import numpy as np

from app.errors import DiverseDecodingError, InputError, ParameterError, TrainingError
from app.models.fusion import FusionModel
from app.models.ngram import NGramLM
from app.models.tabular import TabularModel
from app.models.vocabulary import strip_trailing_eos

logger = logging.getLogger(__name__)

MODEL_KINDS = {
    TabularModel.kind: TabularModel,
    FusionModel.kind: FusionModel,
    NGramLM.kind: NGramLM,
}


def next_logprobs(model, source, prefix):
    """Log-probabilidades do próximo token; exp soma 1."""
    return model.next_logprobs(source, prefix)


def sequence_logprob(model, source, target):
    """Soma de log p(y_t | X, y_<t) sobre os tokens do alvo (sem EOS implícito)."""
    target = tuple(target)
    model.vocab.validate(target)
    source = tuple(source)
    total = 0.0
    for t, token in enumerate(target):
        total = total + float(model.next_logprobs(source, target[:t])[token])
    return total


def _check_hyperparameters(order, alpha, lam=None):
    if order < 1:
        raise ParameterError(f"Erro: ordem deve ser >= 1 (recebido {order}).")
    if not alpha > 0:
        raise ParameterError(f"Erro: alfa deve ser positivo (recebido {alpha}).")
    if lam is not None and not 0.0 <= lam <= 1.0:
        raise ParameterError(f"Erro: lambda deve estar em [0, 1] (recebido {lam}).")


def train_lm(corpus, order, alpha, vocab):
    """LM n-grama add-alfa; cada sequência de treino recebe EOS."""
    _check_hyperparameters(order, alpha)
    corpus = [tuple(seq) for seq in corpus]
    if not corpus:
        raise TrainingError("Erro: corpus de treino vazio.")
    lm = NGramLM.from_corpus(corpus, vocab, order, alpha)
    logger.info("LM treinado: ordem=%d alfa=%g |V|=%d sentencas=%d", order, alpha, vocab.size, len(corpus))
    return lm


def train_fusion(pairs, order, lam, alpha, source_vocab, target_vocab):
    """
    Treina o modelo de fusão. A coocorrência conta cada par (posição de origem,
    posição de alvo) dentro de um mesmo par de treino; EOS não entra na contagem.
    """
    _check_hyperparameters(order, alpha, lam)
    pairs = [(tuple(src), tuple(tgt)) for src, tgt in pairs]
    if not pairs:
        raise TrainingError("Erro: corpus paralelo de treino vazio.")

    counts = np.zeros((source_vocab.size, target_vocab.size), dtype=np.int64)
    for src, tgt in pairs:
        source_vocab.validate(src)
        target_vocab.validate(tgt)
        body = strip_trailing_eos(tgt, target_vocab.eos_id)
        src_body = strip_trailing_eos(src, source_vocab.eos_id)
        if not src_body or not body:
            continue
        rows = np.repeat(np.asarray(src_body), len(body))
        cols = np.tile(np.asarray(body), len(src_body))
        np.add.at(counts, (rows, cols), 1)

    target_lm = NGramLM.from_corpus([tgt for _, tgt in pairs], target_vocab, order, alpha)
    model = FusionModel(target_lm, source_vocab, counts, lam, alpha)
    logger.info("Modelo de fusão treinado: ordem=%d lambda=%g alfa=%g pares=%d", order, lam, alpha, len(pairs))
    return model


def swap_pairs(pairs):
    return [(tgt, src) for src, tgt in pairs]


def train_backward(pairs, order, lam, alpha, source_vocab, target_vocab):
    """Modelo reverso p(X|Y): treino de fusão com origem e alvo trocados."""
    return train_fusion(swap_pairs(pairs), order, lam, alpha,
                        source_vocab=target_vocab, target_vocab=source_vocab)


def fingerprint(model):
    return model.fingerprint()


def model_from_dict(data):
    kind = data.get('kind')
    model_cls = MODEL_KINDS.get(kind)
    if model_cls is None:
        raise InputError(f"Erro: tipo de modelo desconhecido '{kind}'.")
    return model_cls.from_dict(data)


def save_model(model, path):
    with open(path, 'w', encoding='utf-8') as fh:
        json.dump(model.to_dict(), fh, indent=1)
        fh.write('\n')


def load_model(path):
    try:
        with open(path, encoding='utf-8') as fh:
            data = json.load(fh)
    except json.JSONDecodeError as e:
        raise InputError(f"Erro: arquivo de modelo inválido '{path}': {e}") from e
    return model_from_dict(data)


def load_model_service(path):
    """Carrega um modelo persistido, retornando (modelo, erro)."""
    try:
        return load_model(path), None
    except (DiverseDecodingError, OSError, KeyError) as e:
        logger.error("Falha ao carregar modelo %s: %s", path, e)
        return None, f"Erro ao carregar modelo '{path}': {e}"
