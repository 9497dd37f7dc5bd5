# ./app/models/tabular.py
# Modelo tabular explícito: distribuições fixas por (origem, prefixo).
# Dublê exato de p(y_t|X, y_<t) para oráculos e testes.

import numpy as np

from app.errors import ConfigError, InputError
from app.models.sequence_model import SequenceModel
from app.models.vocabulary import Vocabulary

NORMALIZATION_TOLERANCE = 1e-9


def _as_distribution(probs, size, where):
    dist = np.asarray(probs, dtype=np.float64)
    if dist.shape != (size,):
        raise InputError(f"Erro: distribuição {where} com tamanho {dist.shape}, esperado ({size},).")
    if np.any(dist < 0) or not np.all(np.isfinite(dist)):
        raise InputError(f"Erro: distribuição {where} com entradas negativas ou não finitas.")
    if abs(dist.sum() - 1.0) > NORMALIZATION_TOLERANCE:
        raise InputError(f"Erro: distribuição {where} soma {dist.sum():.12f}, esperado 1.")
    dist.flags.writeable = False
    return dist


class TabularModel(SequenceModel):
    """
    Entradas indexadas por (origem, prefixo). A origem None vale para qualquer
    entrada; estados não vistos usam a distribuição padrão (obrigatória).
    """
    kind = 'tabular'

    def __init__(self, vocab, source_vocab, entries, default):
        super().__init__(vocab, source_vocab)
        if default is None:
            raise ConfigError("Erro: o modelo tabular exige uma distribuição padrão.")
        self.default = _as_distribution(default, vocab.size, 'padrão')
        self.entries = {}
        for (source, prefix), probs in entries.items():
            key = (None if source is None else tuple(source), tuple(prefix))
            self.entries[key] = _as_distribution(probs, vocab.size, f"em {key}")

    def _next_probs(self, source, prefix):
        dist = self.entries.get((source, prefix))
        if dist is None:
            dist = self.entries.get((None, prefix), self.default)
        return dist

    @classmethod
    def from_surface(cls, vocab, source_vocab, entries, default):
        """Constrói a partir de chaves em superfície: {(origem, [tokens]): {token: p}}."""
        def to_vector(mapping):
            vec = np.zeros(vocab.size)
            for word, p in mapping.items():
                idx = vocab.index(word)
                if idx is None:
                    raise InputError(f"Erro: token '{word}' fora do vocabulário.")
                vec[idx] = p
            return vec

        table = {}
        for (source_text, prefix_words), mapping in entries.items():
            source = None if source_text is None else source_vocab.encode(source_text.split())
            prefix = tuple(vocab.index(w) for w in prefix_words)
            table[(source, prefix)] = to_vector(mapping)
        return cls(vocab, source_vocab, table, to_vector(default))

    def to_dict(self):
        entries = []
        for (source, prefix) in sorted(self.entries, key=lambda k: (k[0] is not None, k[0] or (), k[1])):
            entries.append({
                'source': None if source is None else ' '.join(self.source_vocab.tokens[i] for i in source),
                'prefix': list(prefix),
                'probs': self.entries[(source, prefix)].tolist(),
            })
        return {
            'kind': self.kind,
            'vocab': self.vocab.to_dict(),
            'source_vocab': self.source_vocab.to_dict(),
            'default': self.default.tolist(),
            'entries': entries,
        }

    @classmethod
    def from_dict(cls, data):
        vocab = Vocabulary.from_dict(data['vocab'])
        source_vocab = Vocabulary.from_dict(data['source_vocab'])
        entries = {}
        for entry in data['entries']:
            source = entry['source']
            key_source = None if source is None else source_vocab.encode(source.split()) if source else ()
            entries[(key_source, tuple(entry['prefix']))] = entry['probs']
        return cls(vocab, source_vocab, entries, data.get('default'))
