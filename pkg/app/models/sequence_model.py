# ./app/models/sequence_model.py
# Interface do modelo condicional p(y_t | X, y_1..y_{t-1}).

import hashlib
import json
from abc import ABC, abstractmethod
from itertools import chain

import numpy as np

from app.errors import InputError, StateError


class SequenceModel(ABC):
    """
    Modelo de sequência condicional sobre um vocabulário fechado.
    Imutável após a construção: pode ser compartilhado entre workers.
    """
    kind = None

    def __init__(self, vocab, source_vocab):
        self.vocab = vocab
        self.source_vocab = source_vocab

    @property
    def eos_id(self):
        return self.vocab.eos_id

    def next_logprobs(self, source, prefix):
        """Log-probabilidades naturais do próximo token (vetor de tamanho |V|)."""
        source = tuple(source)
        prefix = tuple(prefix)
        self._check_source(source)
        self._check_prefixes([prefix])
        with np.errstate(divide='ignore'):
            return np.log(self._next_probs(source, prefix))

    def next_logprobs_batch(self, source, prefixes):
        """Matriz (len(prefixes), |V|) de log-probabilidades para uma mesma origem."""
        source = tuple(source)
        prefixes = [tuple(p) for p in prefixes]
        self._check_source(source)
        self._check_prefixes(prefixes)
        with np.errstate(divide='ignore'):
            return np.log(self._next_probs_batch(source, prefixes))

    def _check_source(self, source):
        for token in source:
            if not 0 <= token < self.source_vocab.size:
                raise InputError(f"Erro: id de token de origem inválido: {token}.")

    def _check_prefixes(self, prefixes):
        flat = np.fromiter(chain.from_iterable(prefixes), dtype=np.int64)
        if not flat.size:
            return
        bad = flat[(flat < 0) | (flat >= self.vocab.size)]
        if bad.size:
            raise InputError(f"Erro: id de token inválido no prefixo: {int(bad[0])}.")
        if np.any(flat == self.vocab.eos_id):
            raise StateError("Erro: o prefixo contém EOS.")

    @abstractmethod
    def _next_probs(self, source, prefix):
        """Distribuição (probabilidades) do próximo token; já validada."""

    def _next_probs_batch(self, source, prefixes):
        return np.stack([self._next_probs(source, prefix) for prefix in prefixes])

    @abstractmethod
    def to_dict(self):
        """Forma persistida canônica."""

    def fingerprint(self):
        """Hash estrutural (SHA-256 da forma persistida canônica)."""
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(payload.encode('utf-8')).hexdigest()

    def __repr__(self):
        return f"<{type(self).__name__} |V|={self.vocab.size} |Vs|={self.source_vocab.size}>"
