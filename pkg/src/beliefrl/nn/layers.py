"""Network building blocks: linear / layer-norm / MLP encoder / LSTM / IB layer.

Each block registers its parameters into a shared `ParameterSet` under a
dotted name prefix at construction time and keeps references for forward
passes. Blocks are plain composition — no module magic.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .optim import ParameterSet


def fan_in_uniform(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


class Linear:
    def __init__(self, pset: ParameterSet, prefix: str, in_dim: int, out_dim: int,
                 rng: np.random.Generator):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.w = pset.add(f"{prefix}.w", fan_in_uniform(rng, in_dim, (in_dim, out_dim)))
        self.b = pset.add(f"{prefix}.b", np.zeros(out_dim))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.linear(x, self.w, self.b)


class LayerNorm:
    def __init__(self, pset: ParameterSet, prefix: str, dim: int):
        self.gain = pset.add(f"{prefix}.gain", np.ones(dim))
        self.bias = pset.add(f"{prefix}.bias", np.zeros(dim))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.gain, self.bias)


class MLPEncoder:
    """Input encoder: first layer (layer-norm?) + tanh, remaining layers ELU.

    Layer normalization on the first layer is skipped in single-threaded
    configurations (`layer_norm=False`).
    """

    def __init__(self, pset: ParameterSet, prefix: str, in_dim: int,
                 widths: tuple[int, ...], rng: np.random.Generator,
                 layer_norm: bool = True):
        self.layers: list[Linear] = []
        self.norm: LayerNorm | None = None
        d = in_dim
        for i, w in enumerate(widths):
            self.layers.append(Linear(pset, f"{prefix}.l{i}", d, w, rng))
            d = w
        if widths and layer_norm:
            self.norm = LayerNorm(pset, f"{prefix}.ln", widths[0])
        self.out_dim = d

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i == 0:
                if self.norm is not None:
                    x = self.norm(x)
                x = ad.tanh(x)
            else:
                x = ad.elu(x)
        return x


class MLP:
    """Plain ELU MLP (belief-head and auxiliary-head processors)."""

    def __init__(self, pset: ParameterSet, prefix: str, in_dim: int,
                 widths: tuple[int, ...], rng: np.random.Generator):
        self.layers = [
            Linear(pset, f"{prefix}.l{i}", d_in, d_out, rng)
            for i, (d_in, d_out) in enumerate(zip((in_dim,) + tuple(widths), widths))
        ]
        self.out_dim = widths[-1] if widths else in_dim

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = ad.elu(layer(x))
        return x


class LSTM:
    """Standard LSTM cell, gate order [i, f, g, o], forget-gate bias 1."""

    def __init__(self, pset: ParameterSet, prefix: str, in_dim: int, hidden: int,
                 rng: np.random.Generator):
        self.hidden = hidden
        self.wx = pset.add(f"{prefix}.wx", fan_in_uniform(rng, in_dim, (in_dim, 4 * hidden)))
        self.wh = pset.add(f"{prefix}.wh", fan_in_uniform(rng, hidden, (hidden, 4 * hidden)))
        b = np.zeros(4 * hidden)
        b[hidden : 2 * hidden] = 1.0
        self.b = pset.add(f"{prefix}.b", b)

    def initial_state(self, batch: int) -> tuple[Tensor, Tensor]:
        return (Tensor(np.zeros((batch, self.hidden))),
                Tensor(np.zeros((batch, self.hidden))))

    def step(self, x: Tensor, state: tuple[Tensor, Tensor]) -> tuple[Tensor, tuple[Tensor, Tensor]]:
        h, c = state
        h_new, c_new = ad.lstm_step(x, h, c, self.wx, self.wh, self.b)
        return h_new, (h_new, c_new)


class IBLayer:
    """Stochastic encoder z ~ N(mu, sigma^2) with KL(N(mu,sigma^2) || N(0,1)).

    sigma = exp(s) so the layer can match the standard-normal prior exactly
    (KL = 0 iff mu = 0, sigma = 1). With `fixed_std` set, sigma is pinned,
    only mu is learned, and the KL term is dropped (reported as 0).
    """

    def __init__(self, pset: ParameterSet, prefix: str, in_dim: int, z_dim: int,
                 rng: np.random.Generator, kl_coeff: float = 0.0,
                 fixed_std: float | None = None, sample_at_act: bool = True):
        if z_dim < 1:
            raise ValueError("IB latent dimension must be >= 1")
        if kl_coeff < 0:
            raise ValueError("IB KL coefficient must be >= 0")
        self.z_dim = z_dim
        self.kl_coeff = kl_coeff
        self.fixed_std = fixed_std
        self.sample_at_act = sample_at_act
        self.mu = Linear(pset, f"{prefix}.mu", in_dim, z_dim, rng)
        if fixed_std is None:
            self.s = Linear(pset, f"{prefix}.s", in_dim, z_dim, rng)
        else:
            self.s = None

    def __call__(self, x: Tensor, rng: np.random.Generator | None,
                 sample: bool = True) -> tuple[Tensor, Tensor]:
        """Return (z, kl) with kl of shape (batch,): sum over latent dims."""
        mu = self.mu(x)
        if self.fixed_std is not None:
            std_val = self.fixed_std
            if sample:
                eps = rng.standard_normal(mu.shape)
                z = mu + Tensor(std_val * eps)
            else:
                z = mu
            kl = Tensor(np.zeros(mu.shape[:-1]))
            return z, kl
        s = self.s(x)
        std = ad.exp(s)
        if sample:
            eps = rng.standard_normal(mu.shape)
            z = mu + std * Tensor(eps)
        else:
            z = mu
        # KL(N(mu, sigma^2) || N(0,1)) = sum_j (mu_j^2 + sigma_j^2 - 1 - 2 ln sigma_j) / 2
        kl = ad.sum(0.5 * (ad.square(mu) + ad.square(std) - 1.0 - 2.0 * s), axis=-1)
        return z, kl
