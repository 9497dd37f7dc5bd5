# ./app/models/policy.py
# Política de taxa de diversidade: softmax bilinear entre a representação da
# origem h_X e uma incorporação por valor da grade Gamma, e o estimador de baseline.

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from app.errors import InputError


@dataclass(frozen=True)
class GammaGrid:
    """Valores possíveis de gamma: estritamente crescentes e não negativos."""
    values: Tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, 'values', values)
        if not values:
            raise InputError("Erro: a grade de gamma não pode ser vazia.")
        if any(v < 0 or not math.isfinite(v) for v in values):
            raise InputError("Erro: valores de gamma devem ser finitos e não negativos.")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise InputError("Erro: a grade de gamma deve ser estritamente crescente.")

    @classmethod
    def regular(cls, low=0.0, high=1.0, step=0.05):
        count = int(round((high - low) / step)) + 1
        return cls(tuple(round(low + step * i, 10) for i in range(count)))

    def __len__(self):
        return len(self.values)

    def __getitem__(self, index):
        return self.values[index]


@dataclass
class FeatureStandardizer:
    """Padronização (x - média) / desvio; a componente de viés (índice 0) fica intacta."""
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def identity(cls, dim):
        return cls(mean=np.zeros(dim), std=np.ones(dim))

    @classmethod
    def fit(cls, rows):
        matrix = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        mean = matrix.mean(axis=0)
        std = matrix.std(axis=0)
        std[std == 0] = 1.0
        mean[0], std[0] = 0.0, 1.0
        return cls(mean=mean, std=std)

    def apply(self, raw):
        return (np.asarray(raw, dtype=np.float64) - self.mean) / self.std

    def to_dict(self):
        return {'mean': self.mean.tolist(), 'std': self.std.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(mean=np.asarray(data['mean'], dtype=np.float64),
                   std=np.asarray(data['std'], dtype=np.float64))


@dataclass
class DiversityPolicy:
    """
    pi(gamma_j | X) = softmax_j( (h_X W) . E_j )

    W (d x e) é a projeção de entrada compartilhada e E (|Gamma| x e) as
    incorporações de classe; theta = (W, E).
    """
    grid: GammaGrid
    projection: np.ndarray
    embeddings: np.ndarray
    standardizer: Optional[FeatureStandardizer] = None

    def __post_init__(self):
        self.projection = np.asarray(self.projection, dtype=np.float64)
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        if self.embeddings.shape != (len(self.grid), self.projection.shape[1]):
            raise InputError(f"Erro: incorporações com formato {self.embeddings.shape}, "
                             f"esperado ({len(self.grid)}, {self.projection.shape[1]}).")
        if self.standardizer is None:
            self.standardizer = FeatureStandardizer.identity(self.feature_dim)

    @classmethod
    def initial(cls, grid, feature_dim, standardizer=None, embedding_dim=None, rng=None):
        """Projeção identidade (ou aleatória se e != d) e incorporações nulas: política uniforme."""
        embedding_dim = embedding_dim or feature_dim
        if embedding_dim == feature_dim:
            projection = np.eye(feature_dim)
        else:
            rng = rng if rng is not None else np.random.default_rng(0)
            projection = rng.normal(scale=0.1, size=(feature_dim, embedding_dim))
        embeddings = np.zeros((len(grid), embedding_dim))
        return cls(grid, projection, embeddings, standardizer)

    @property
    def feature_dim(self):
        return self.projection.shape[0]

    def check_dim(self, h):
        h = np.asarray(h, dtype=np.float64)
        if h.shape != (self.feature_dim,):
            raise InputError(f"Erro: h_X com dimensão {h.shape}, esperado ({self.feature_dim},).")
        return h

    def logits(self, h):
        h = self.check_dim(h)
        return self.embeddings @ (h @ self.projection)

    def probs(self, h):
        z = self.logits(h)
        z = z - z.max()
        e = np.exp(z)
        return e / e.sum()

    def log_prob(self, h, action):
        z = self.logits(h)
        shift = z.max()
        return float(z[action] - shift - np.log(np.exp(z - shift).sum()))

    def grad_log_prob(self, h, action):
        """(dW, dE) de log pi(action | h)."""
        h = self.check_dim(h)
        u = h @ self.projection
        g = -self.probs(h)
        g[action] += 1.0
        d_embeddings = np.outer(g, u)
        d_projection = np.outer(h, self.embeddings.T @ g)
        return d_projection, d_embeddings

    def copy(self):
        return DiversityPolicy(self.grid, self.projection.copy(), self.embeddings.copy(), self.standardizer)

    def to_dict(self):
        return {
            'grid': list(self.grid.values),
            'standardizer': self.standardizer.to_dict(),
            'projection': self.projection.tolist(),
            'embeddings': self.embeddings.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            grid=GammaGrid(tuple(data['grid'])),
            projection=np.asarray(data['projection'], dtype=np.float64),
            embeddings=np.asarray(data['embeddings'], dtype=np.float64),
            standardizer=FeatureStandardizer.from_dict(data['standardizer']),
        )


@dataclass
class BaselineEstimator:
    """Regressão linear b = h . v treinada por erro quadrático, isolada da política."""
    weights: np.ndarray

    @classmethod
    def zeros(cls, dim):
        return cls(weights=np.zeros(dim))

    def predict(self, h):
        return float(np.asarray(h, dtype=np.float64) @ self.weights)

    def updated(self, h, reward, lr):
        """Um passo de gradiente em (R - b)^2."""
        h = np.asarray(h, dtype=np.float64)
        error = reward - self.predict(h)
        return BaselineEstimator(weights=self.weights + lr * 2.0 * error * h)

    def to_dict(self):
        return {'weights': self.weights.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(weights=np.asarray(data['weights'], dtype=np.float64))


@dataclass(frozen=True)
class RewardRecord:
    """Uma instância de treino: ação amostrada, recompensa e baseline."""
    instance: int
    source_id: int
    action: int
    gamma: float
    reward: float
    baseline: float
    text: str

    def to_dict(self):
        return {
            'event': 'reward',
            'instance': self.instance,
            'source_id': self.source_id,
            'action': self.action,
            'gamma': self.gamma,
            'reward': self.reward,
            'baseline': self.baseline,
            'text': self.text,
        }


@dataclass(frozen=True)
class RetuneEvent:
    """Reajuste dos pesos do reranker durante o treino da política."""
    instance: int
    dev_bleu: float
    weights: Tuple[Tuple[str, float], ...]

    def to_dict(self):
        return {
            'event': 'retune',
            'instance': self.instance,
            'dev_bleu': self.dev_bleu,
            'weights': dict(self.weights),
        }
