# ./app/models/fusion.py
# Modelo de fusão treinável: mistura de um n-grama do alvo com uma tabela léxica
# p_lex(alvo | origem). Substitui o encoder-decoder neural na escala de bancada.

from functools import lru_cache

import numpy as np

from app.errors import InputError
from app.models.ngram import CACHE_SIZE, NGramLM
from app.models.sequence_model import SequenceModel
from app.models.vocabulary import Vocabulary


class FusionModel(SequenceModel):
    """
    p(y_t | X, y_<t) = lam * p_ngram(y_t | y_<t) + (1 - lam) * media_{s em X} p_lex(y_t | s)

    p_lex(t|s) = (count(s,t) + alfa) / (sum_t' count(s,t') + alfa * |V_alvo|)
    A mistura é no espaço de probabilidades, então a normalização é automática.
    """
    kind = 'fusion'

    def __init__(self, target_lm, source_vocab, lex_counts, lam, alpha):
        super().__init__(target_lm.vocab, source_vocab)
        if not 0.0 <= lam <= 1.0:
            raise InputError(f"Erro: lambda deve estar em [0, 1] (recebido {lam}).")
        if alpha <= 0:
            raise InputError(f"Erro: alfa deve ser positivo (recebido {alpha}).")
        self.target_lm = target_lm
        self.lam = float(lam)
        self.alpha = float(alpha)
        counts = np.asarray(lex_counts, dtype=np.int64)
        expected = (source_vocab.size, target_lm.vocab.size)
        if counts.shape != expected:
            raise InputError(f"Erro: tabela léxica com formato {counts.shape}, esperado {expected}.")
        counts.flags.writeable = False
        self.lex_counts = counts
        smoothed = counts + self.alpha
        self.lex_probs = smoothed / smoothed.sum(axis=1, keepdims=True)
        self.lex_probs.flags.writeable = False
        self._source_mixture = lru_cache(maxsize=CACHE_SIZE)(self._compute_source_mixture)

    def __getstate__(self):
        state = self.__dict__.copy()
        state.pop('_source_mixture', None)
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._source_mixture = lru_cache(maxsize=CACHE_SIZE)(self._compute_source_mixture)

    @property
    def order(self):
        return self.target_lm.order

    def _compute_source_mixture(self, source):
        # Origem vazia: tabela léxica sem informação, distribuição uniforme
        if not source:
            mix = np.full(self.vocab.size, 1.0 / self.vocab.size)
        else:
            mix = self.lex_probs[list(source)].mean(axis=0)
        mix.flags.writeable = False
        return mix

    def _next_probs(self, source, prefix):
        lm = self.target_lm.conditional(prefix)
        return self.lam * lm + (1.0 - self.lam) * self._source_mixture(source)

    def _next_probs_batch(self, source, prefixes):
        lm = np.stack([self.target_lm.conditional(prefix) for prefix in prefixes])
        return self.lam * lm + (1.0 - self.lam) * self._source_mixture(source)

    def to_dict(self):
        rows, cols = np.nonzero(self.lex_counts)
        return {
            'kind': self.kind,
            'lam': self.lam,
            'alpha': self.alpha,
            'source_vocab': self.source_vocab.to_dict(),
            'target_lm': self.target_lm.to_dict(),
            'lex_counts': [[int(s), int(t), int(self.lex_counts[s, t])] for s, t in zip(rows, cols)],
        }

    @classmethod
    def from_dict(cls, data):
        source_vocab = Vocabulary.from_dict(data['source_vocab'])
        target_lm = NGramLM.from_dict(data['target_lm'])
        counts = np.zeros((source_vocab.size, target_lm.vocab.size), dtype=np.int64)
        for s, t, c in data['lex_counts']:
            counts[s, t] = c
        return cls(target_lm, source_vocab, counts, data['lam'], data['alpha'])
