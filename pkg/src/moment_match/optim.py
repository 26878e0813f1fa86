"""Element-wise first-order optimizers: Adagrad, Adadelta and plain SGD.

Each optimizer owns its accumulators and is driven by ``step(params, grads)``,
which returns a new list of parameter arrays and leaves the inputs untouched.
"""

from __future__ import annotations

import numpy as np


class Optimizer:
    kind = "base"

    def __init__(self):
        self._slots: list[dict[str, np.ndarray]] | None = None

    def _check(self, params, grads):
        if len(params) != len(grads):
            raise ValueError(f"got {len(params)} parameters but {len(grads)} gradients")
        for i, (p, g) in enumerate(zip(params, grads)):
            if np.shape(p) != np.shape(g):
                raise ValueError(f"parameter {i} has shape {np.shape(p)}, gradient {np.shape(g)}")
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter {i}")
        if self._slots is None:
            self._slots = [self._init_slot(np.shape(p)) for p in params]
        elif [s["shape"] for s in self._slots] != [np.shape(p) for p in params]:
            raise ValueError("parameter shapes changed between steps")

    def _init_slot(self, shape) -> dict:
        return {"shape": shape}

    def step(self, params, grads) -> list[np.ndarray]:
        self._check(params, grads)
        return [
            self._update(np.asarray(p, dtype=float), np.asarray(g, dtype=float), slot)
            for p, g, slot in zip(params, grads, self._slots)
        ]

    def _update(self, p, g, slot):
        raise NotImplementedError

    @property
    def accumulators(self) -> list[dict[str, np.ndarray]]:
        return self._slots or []

    def config(self) -> dict:
        return {"kind": self.kind}


class SGD(Optimizer):
    kind = "sgd"

    def __init__(self, lr: float = 0.01):
        super().__init__()
        self.lr = lr

    def _update(self, p, g, slot):
        return p - self.lr * g

    def config(self):
        return {"kind": self.kind, "lr": self.lr}


class Adagrad(Optimizer):
    """``acc += g**2; p -= lr * g / (sqrt(acc) + eps)``."""

    kind = "adagrad"

    def __init__(self, lr: float = 0.01, eps: float = 1e-7):
        super().__init__()
        self.lr = lr
        self.eps = eps

    def _init_slot(self, shape):
        return {"shape": shape, "acc": np.zeros(shape)}

    def _update(self, p, g, slot):
        slot["acc"] = slot["acc"] + g * g
        return p - self.lr * g / (np.sqrt(slot["acc"]) + self.eps)

    def config(self):
        return {"kind": self.kind, "lr": self.lr, "eps": self.eps}


class Adadelta(Optimizer):
    """Learning-rate-free Adadelta with decayed averages of squared gradients and updates."""

    kind = "adadelta"

    def __init__(self, rho: float = 0.95, eps: float = 1e-7):
        super().__init__()
        self.rho = rho
        self.eps = eps

    def _init_slot(self, shape):
        return {"shape": shape, "sq_grad": np.zeros(shape), "sq_update": np.zeros(shape)}

    def _update(self, p, g, slot):
        rho, eps = self.rho, self.eps
        slot["sq_grad"] = rho * slot["sq_grad"] + (1.0 - rho) * g * g
        delta = -np.sqrt(slot["sq_update"] + eps) / np.sqrt(slot["sq_grad"] + eps) * g
        slot["sq_update"] = rho * slot["sq_update"] + (1.0 - rho) * delta * delta
        return p + delta

    def config(self):
        return {"kind": self.kind, "rho": self.rho, "eps": self.eps}


OPTIMIZERS = {"sgd": SGD, "adagrad": Adagrad, "adadelta": Adadelta}


def make_optimizer(kind: str, **params) -> Optimizer:
    try:
        cls = OPTIMIZERS[kind]
    except KeyError:
        raise ValueError(f"unknown optimizer {kind!r}; choose from {sorted(OPTIMIZERS)}") from None
    return cls(**params)
