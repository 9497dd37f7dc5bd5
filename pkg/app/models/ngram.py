# ./app/models/ngram.py
# Modelo de linguagem n-grama com suavização add-alfa.

from collections import defaultdict
from functools import lru_cache

import numpy as np

from app.errors import InputError
from app.models.sequence_model import SequenceModel
from app.models.vocabulary import Vocabulary

CACHE_SIZE = 1 << 12


class NGramLM(SequenceModel):
    """
    p(w | ctx) = (c(ctx, w) + alfa) / (c(ctx) + alfa * |V|)

    O contexto são os últimos order-1 tokens do histórico (truncado no início da
    sentença, sem símbolo de início). A origem é ignorada.
    """
    kind = 'ngram'

    def __init__(self, vocab, order, alpha, counts):
        super().__init__(vocab, vocab)
        if order < 1:
            raise InputError(f"Erro: ordem do n-grama deve ser >= 1 (recebido {order}).")
        if alpha <= 0:
            raise InputError(f"Erro: alfa deve ser positivo (recebido {alpha}).")
        self.order = int(order)
        self.alpha = float(alpha)
        # contexto (tupla) -> {token: contagem}
        self.counts = {tuple(ctx): dict(row) for ctx, row in counts.items()}
        self.context_totals = {ctx: sum(row.values()) for ctx, row in self.counts.items()}
        self._conditional = lru_cache(maxsize=CACHE_SIZE)(self._compute_conditional)

    def __getstate__(self):
        # O cache não é serializável; é recriado no worker
        state = self.__dict__.copy()
        state.pop('_conditional', None)
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._conditional = lru_cache(maxsize=CACHE_SIZE)(self._compute_conditional)

    def context_of(self, prefix):
        if self.order == 1:
            return ()
        return tuple(prefix[-(self.order - 1):])

    def _compute_conditional(self, context):
        size = self.vocab.size
        vec = np.full(size, self.alpha)
        row = self.counts.get(context)
        total = 0
        if row:
            for token, count in row.items():
                vec[token] += count
            total = self.context_totals[context]
        vec /= total + self.alpha * size
        vec.flags.writeable = False
        return vec

    def conditional(self, prefix):
        """Distribuição do próximo token dado o histórico (probabilidades)."""
        return self._conditional(self.context_of(tuple(prefix)))

    def _next_probs(self, source, prefix):
        return self.conditional(prefix)

    def unigram_counts(self):
        """Frequência de cada token no treino (cada posição conta em um único contexto)."""
        totals = np.zeros(self.vocab.size, dtype=np.int64)
        for row in self.counts.values():
            for token, count in row.items():
                totals[token] += count
        return totals

    @classmethod
    def from_corpus(cls, corpus, vocab, order, alpha):
        """Conta n-gramas; cada sequência recebe EOS ao final."""
        counts = defaultdict(lambda: defaultdict(int))
        for seq in corpus:
            vocab.validate(seq)
            body = tuple(seq)
            if body and body[-1] == vocab.eos_id:
                body = body[:-1]
            padded = body + (vocab.eos_id,)
            for i, token in enumerate(padded):
                ctx = padded[max(0, i - order + 1):i] if order > 1 else ()
                counts[ctx][token] += 1
        return cls(vocab, order, alpha, counts)

    def to_dict(self):
        table = []
        for ctx in sorted(self.counts):
            for token in sorted(self.counts[ctx]):
                table.append([list(ctx), token, self.counts[ctx][token]])
        return {
            'kind': self.kind,
            'vocab': self.vocab.to_dict(),
            'order': self.order,
            'alpha': self.alpha,
            'counts': table,
        }

    @classmethod
    def from_dict(cls, data):
        counts = defaultdict(dict)
        for ctx, token, count in data['counts']:
            counts[tuple(ctx)][int(token)] = int(count)
        return cls(Vocabulary.from_dict(data['vocab']), data['order'], data['alpha'], counts)
