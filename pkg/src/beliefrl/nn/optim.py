"""Parameter containers and the Adam update.

A `ParameterSet` is an insertion-ordered bag of named leaf Tensors plus the
Adam moment buffers that ride along with them, so checkpointing a learner is
a single `state_dict()` round-trip and syncing a target copy is one call.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .autodiff import Tensor


class ParameterSet:
    """Named trainable leaves with attached Adam state."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step_count: int = 0

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name: {name}")
        t = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        self._m[name] = np.zeros_like(t.data)
        self._v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._params.items())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def set_requires_grad(self, flag: bool) -> None:
        for t in self._params.values():
            t.requires_grad = flag

    def grad_norm(self) -> float:
        total = 0.0
        for t in self._params.values():
            if t.grad is not None:
                total += float(np.square(t.grad).sum())
        return float(np.sqrt(total))

    def copy_values_from(self, other: "ParameterSet") -> None:
        """Overwrite parameter values (not optimizer state) from `other`."""
        if other.names() != self.names():
            raise ValueError("parameter sets have different structure")
        for name, t in self._params.items():
            np.copyto(t.data, other._params[name].data)

    def clone(self) -> "ParameterSet":
        """Deep copy of values and optimizer state (target networks)."""
        out = ParameterSet()
        for name, t in self._params.items():
            out.add(name, t.data.copy())
            out._m[name] = self._m[name].copy()
            out._v[name] = self._v[name].copy()
        out.step_count = self.step_count
        return out

    # -- persistence ---------------------------------------------------------

    def state_dict(self) -> dict[str, np.ndarray]:
        state: dict[str, np.ndarray] = {"__step_count__": np.asarray(self.step_count)}
        for name, t in self._params.items():
            state[f"p:{name}"] = t.data
            state[f"m:{name}"] = self._m[name]
            state[f"v:{name}"] = self._v[name]
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        self.step_count = int(state["__step_count__"])
        for name, t in self._params.items():
            np.copyto(t.data, state[f"p:{name}"])
            np.copyto(self._m[name], state[f"m:{name}"])
            np.copyto(self._v[name], state[f"v:{name}"])


def adam_update(
    params: ParameterSet,
    learning_rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> ParameterSet:
    """One Adam step over every parameter in the set (in place).

    Parameters with no accumulated gradient raise: a silent zero-grad step
    usually means a wiring bug (a head not contributing to the loss).
    """
    params.step_count += 1
    t = params.step_count
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, p in params._params.items():
        if p.grad is None:
            raise ValueError(f"parameter {name!r} has no gradient at update time")
        g = p.grad
        m = params._m[name]
        v = params._v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p.data -= learning_rate * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params


def clip_grad_norm(params: ParameterSet, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most `max_norm`."""
    norm = params.grad_norm()
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for t in params.tensors():
            if t.grad is not None:
                t.grad = t.grad * scale
    return norm
