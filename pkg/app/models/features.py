# ./app/models/features.py
# Vetores de características para reranking e pesos lineares.

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from app.errors import InputError

FEATURE_NAMES = ('fwd_logp', 'bwd_logp', 'length', 'lm_logp', 'tfidf_avg')
BASE_FEATURES = FEATURE_NAMES[:4]


@dataclass(frozen=True)
class FeatureVector:
    """Características globais de uma hipótese finalizada (EOS fora de length/LM/tf-idf)."""
    fwd_logp: float
    bwd_logp: float
    length: float
    lm_logp: float
    tfidf_avg: Optional[float] = None

    @property
    def names(self):
        return FEATURE_NAMES if self.tfidf_avg is not None else BASE_FEATURES

    def as_array(self, names=None):
        names = names or self.names
        values = []
        for name in names:
            value = getattr(self, name, None)
            if value is None:
                raise InputError(f"Erro: característica '{name}' ausente.")
            values.append(value)
        return np.asarray(values, dtype=np.float64)

    def to_dict(self):
        return {name: getattr(self, name) for name in self.names}

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(FEATURE_NAMES)
        if unknown:
            raise InputError(f"Erro: características desconhecidas: {sorted(unknown)}")
        return cls(**{name: float(value) for name, value in data.items()})


@dataclass(frozen=True)
class FeatureWeights:
    """Um peso real por característica ativa, na ordem de 'names'."""
    names: Tuple[str, ...]
    values: Tuple[float, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, 'names', tuple(self.names))
        object.__setattr__(self, 'values', tuple(float(v) for v in self.values))
        if len(self.names) != len(self.values):
            raise InputError("Erro: número de pesos diferente do número de características.")
        if not all(math.isfinite(v) for v in self.values):
            raise InputError("Erro: pesos devem ser finitos.")
        unknown = set(self.names) - set(FEATURE_NAMES)
        if unknown:
            raise InputError(f"Erro: características desconhecidas: {sorted(unknown)}")

    @classmethod
    def unit(cls, names, feature='fwd_logp'):
        """Peso 1 em uma característica, 0 nas demais (inicialização padrão do MERT)."""
        return cls(names=tuple(names), values=tuple(1.0 if n == feature else 0.0 for n in names))

    def as_array(self):
        return np.asarray(self.values, dtype=np.float64)

    def scaled(self, factor):
        return FeatureWeights(self.names, tuple(v * factor for v in self.values))

    def to_dict(self) -> Dict[str, float]:
        return dict(zip(self.names, self.values))

    @classmethod
    def from_dict(cls, data):
        return cls(names=tuple(data), values=tuple(data.values()))
