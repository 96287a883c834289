"""Distribution heads: policy, value, and belief parameterizations.

Heads own their final linear map(s) and return lightweight distribution
objects built from Tensors, so log-densities and entropies stay on the tape.
Targets passed to `log_prob` are constants (numpy arrays), never
differentiated through.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import Linear
from .optim import ParameterSet

LOG_2PI = float(np.log(2.0 * np.pi))


# ---------------------------------------------------------------------------
# distribution objects


class DiagGaussian:
    """Diagonal Gaussian over the last axis; log_prob/entropy sum over dims."""

    def __init__(self, mean: Tensor, std: Tensor):
        self.mean = mean
        self.std = std

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]

    def log_prob(self, x) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
        z = (x - self.mean) / self.std
        terms = -0.5 * ad.square(z) - ad.log(self.std) - 0.5 * LOG_2PI
        return ad.sum(terms, axis=-1)

    def entropy(self) -> Tensor:
        return ad.sum(ad.log(self.std), axis=-1) + 0.5 * self.dim * (1.0 + LOG_2PI)

    def rsample(self, eps: np.ndarray) -> Tensor:
        """Reparameterized sample with externally supplied standard-normal noise."""
        return self.mean + self.std * Tensor(eps)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.mean.data + self.std.data * rng.standard_normal(self.mean.shape)

    def mode(self) -> np.ndarray:
        return self.mean.data


class Categorical:
    def __init__(self, logits: Tensor):
        self.logits = logits
        self.log_probs = ad.log_softmax(logits, axis=-1)

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs.data)

    def log_prob(self, actions: np.ndarray) -> Tensor:
        return ad.take_rows(self.log_probs, np.asarray(actions, dtype=np.int64))

    def entropy(self) -> Tensor:
        p = ad.exp(self.log_probs)
        return -ad.sum(p * self.log_probs, axis=-1)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        p = self.probs
        cdf = np.cumsum(p, axis=-1)
        u = rng.random(p.shape[:-1] + (1,))
        return (u > cdf).sum(axis=-1).astype(np.int64)

    def mode(self) -> np.ndarray:
        return self.log_probs.data.argmax(axis=-1)


class BetaPerDim:
    """Independent Beta distributions over the last axis (per-arm beliefs)."""

    def __init__(self, alpha: Tensor, beta: Tensor):
        self.alpha = alpha
        self.beta = beta

    def log_prob(self, x: np.ndarray) -> Tensor:
        x = np.asarray(x, dtype=np.float64)
        log_x = Tensor(np.log(x))
        log_1mx = Tensor(np.log1p(-x))
        log_norm = (ad.lgamma(self.alpha) + ad.lgamma(self.beta)
                    - ad.lgamma(self.alpha + self.beta))
        terms = (self.alpha - 1.0) * log_x + (self.beta - 1.0) * log_1mx - log_norm
        return ad.sum(terms, axis=-1)

    def mean(self) -> np.ndarray:
        a, b = self.alpha.data, self.beta.data
        return a / (a + b)


class BinnedDensity:
    """Piecewise-constant density on [lo, hi] with uniform-width bins.

    Bin masses come from a softmax, so the density integrates to one:
    density(x) = mass[bin(x)] / bin_width.
    """

    def __init__(self, log_masses: Tensor, lo: float, hi: float):
        self.log_masses = log_masses
        self.lo = lo
        self.hi = hi
        self.n_bins = log_masses.shape[-1]
        self.width = (hi - lo) / self.n_bins

    @property
    def masses(self) -> np.ndarray:
        return np.exp(self.log_masses.data)

    def bin_index(self, x: np.ndarray) -> np.ndarray:
        idx = np.floor((np.asarray(x) - self.lo) / self.width).astype(np.int64)
        return np.clip(idx, 0, self.n_bins - 1)

    def log_prob(self, x: np.ndarray) -> Tensor:
        """Log density at x (scalar target per batch row)."""
        lm = ad.take_rows(self.log_masses, self.bin_index(x))
        return lm - float(np.log(self.width))

    def density(self, x: np.ndarray) -> np.ndarray:
        rows = np.arange(self.log_masses.shape[0])
        return np.exp(self.log_masses.data[rows, self.bin_index(x)]) / self.width


class FactoredCategorical:
    """K independent categorical distributions (logits shaped (B, K, C))."""

    def __init__(self, logits: Tensor):
        self.k = logits.shape[-2]
        self.c = logits.shape[-1]
        self.batch = logits.shape[0]
        flat = ad.reshape(logits, (self.batch * self.k, self.c))
        self._flat_log_probs = ad.log_softmax(flat, axis=-1)

    @property
    def log_probs(self) -> np.ndarray:
        return self._flat_log_probs.data.reshape(self.batch, self.k, self.c)

    def log_prob(self, idx: np.ndarray) -> Tensor:
        """idx: (B, K) integer class indices; returns (B,) joint log-prob."""
        flat_idx = np.asarray(idx, dtype=np.int64).reshape(-1)
        lp = ad.take_rows(self._flat_log_probs, flat_idx)
        return ad.sum(ad.reshape(lp, (self.batch, self.k)), axis=-1)

    def entropy(self) -> Tensor:
        p = ad.exp(self._flat_log_probs)
        ent = -ad.sum(p * self._flat_log_probs, axis=-1)
        return ad.sum(ad.reshape(ent, (self.batch, self.k)), axis=-1)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        p = np.exp(self._flat_log_probs.data)
        cdf = np.cumsum(p, axis=-1)
        u = rng.random((p.shape[0], 1))
        flat = (u > cdf).sum(axis=-1)
        return flat.reshape(self.batch, self.k).astype(np.int64)

    def mode(self) -> np.ndarray:
        return self._flat_log_probs.data.argmax(axis=-1).reshape(self.batch, self.k)


# ---------------------------------------------------------------------------
# head modules


def squash_gaussian_params(raw_mu: Tensor, raw_log_std: Tensor) -> tuple[Tensor, Tensor]:
    """(mu_a, log sigma_a) -> (tanh(mu_a), 0.001 + (1 - 0.001) * sigmoid(log sigma_a))."""
    mean = ad.tanh(raw_mu)
    std = 0.001 + 0.999 * ad.sigmoid(raw_log_std)
    return mean, std


class DiagGaussianPolicyHead:
    """Squashed-parameter Gaussian policy: mean in (-1,1), std in (0.001, 1)."""

    def __init__(self, pset: ParameterSet, prefix: str, in_dim: int, dim: int,
                 rng: np.random.Generator):
        self.dim = dim
        self.lin = Linear(pset, f"{prefix}.out", in_dim, 2 * dim, rng)

    def __call__(self, feat: Tensor) -> DiagGaussian:
        raw = self.lin(feat)
        mean, std = squash_gaussian_params(
            ad.narrow(raw, -1, 0, self.dim), ad.narrow(raw, -1, self.dim, self.dim)
        )
        return DiagGaussian(mean, std)


class GaussianHead:
    """Unsquashed Gaussian (belief over continuous targets): std = 1e-3 + softplus."""

    def __init__(self, pset: ParameterSet, prefix: str, in_dim: int, dim: int,
                 rng: np.random.Generator):
        self.dim = dim
        self.lin = Linear(pset, f"{prefix}.out", in_dim, 2 * dim, rng)

    def __call__(self, feat: Tensor) -> DiagGaussian:
        raw = self.lin(feat)
        mean = ad.narrow(raw, -1, 0, self.dim)
        std = ad.softplus(ad.narrow(raw, -1, self.dim, self.dim)) + 1e-3
        return DiagGaussian(mean, std)


class CategoricalHead:
    def __init__(self, pset: ParameterSet, prefix: str, in_dim: int, n: int,
                 rng: np.random.Generator):
        self.lin = Linear(pset, f"{prefix}.out", in_dim, n, rng)

    def __call__(self, feat: Tensor) -> Categorical:
        return Categorical(self.lin(feat))


class BetaHead:
    """Per-dimension Beta parameters via softplus(.) + 1e-3."""

    def __init__(self, pset: ParameterSet, prefix: str, in_dim: int, dim: int,
                 rng: np.random.Generator):
        self.dim = dim
        self.lin = Linear(pset, f"{prefix}.out", in_dim, 2 * dim, rng)

    def __call__(self, feat: Tensor) -> BetaPerDim:
        raw = self.lin(feat)
        alpha = ad.softplus(ad.narrow(raw, -1, 0, self.dim)) + 1e-3
        beta = ad.softplus(ad.narrow(raw, -1, self.dim, self.dim)) + 1e-3
        return BetaPerDim(alpha, beta)


class BinnedDensityHead:
    def __init__(self, pset: ParameterSet, prefix: str, in_dim: int, n_bins: int,
                 lo: float, hi: float, rng: np.random.Generator):
        self.lo = lo
        self.hi = hi
        self.lin = Linear(pset, f"{prefix}.out", in_dim, n_bins, rng)

    def __call__(self, feat: Tensor) -> BinnedDensity:
        return BinnedDensity(ad.log_softmax(self.lin(feat), axis=-1), self.lo, self.hi)


class FactoredCategoricalHead:
    def __init__(self, pset: ParameterSet, prefix: str, in_dim: int, k: int, c: int,
                 rng: np.random.Generator):
        self.k = k
        self.c = c
        self.lin = Linear(pset, f"{prefix}.out", in_dim, k * c, rng)

    def __call__(self, feat: Tensor) -> FactoredCategorical:
        raw = self.lin(feat)
        return FactoredCategorical(ad.reshape(raw, (raw.shape[0], self.k, self.c)))


class ScalarHead:
    """Linear map to a scalar (value / Q heads); returns shape (batch,)."""

    def __init__(self, pset: ParameterSet, prefix: str, in_dim: int,
                 rng: np.random.Generator):
        self.lin = Linear(pset, f"{prefix}.out", in_dim, 1, rng)

    def __call__(self, feat: Tensor) -> Tensor:
        return ad.reshape(self.lin(feat), (feat.shape[0],))
