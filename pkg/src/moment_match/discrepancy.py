"""Sample discrepancies between hidden-activation distributions.

Three measures are provided, each with an analytic gradient with respect to
the first sample:

* ``cmd_k``: central moment discrepancy truncated after ``K`` orders,
  linear in the number of rows.
* ``mmd2``: squared maximum mean discrepancy with a Gaussian kernel
  (biased V-statistic, quadratic in the number of rows).
* ``mkl``: symmetrised KL divergence between coordinate-wise means.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .samples import Sample

MKL_EPS = 1e-8

# Rows per block when forming kernel matrices; bounds peak memory at ~block*m floats.
_KERNEL_BLOCK_ENTRIES = 2_000_000


@dataclass(frozen=True)
class DiscrepancySpec:
    """Choice of domain regularizer and its weight ``lam`` in the training objective."""

    kind: str = "cmd"
    K: int = 5
    beta: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        if self.kind not in ("cmd", "mmd", "mkl"):
            raise ValueError(f"unknown discrepancy kind {self.kind!r}")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be an integer >= 1, got {self.K}")
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "lam", float(self.lam))

    @classmethod
    def cmd(cls, K: int = 5, lam: float = 1.0) -> "DiscrepancySpec":
        return cls("cmd", K=K, lam=lam)

    @classmethod
    def mmd(cls, beta: float = 1.0, lam: float = 1.0) -> "DiscrepancySpec":
        return cls("mmd", beta=beta, lam=lam)

    @classmethod
    def mkl(cls, lam: float = 1.0) -> "DiscrepancySpec":
        return cls("mkl", lam=lam)

    def value(self, X: Sample, Y: Sample) -> float:
        if self.kind == "cmd":
            return cmd_k(X, Y, self.K).value
        if self.kind == "mmd":
            return mmd2(X, Y, self.beta)
        return mkl(X, Y)

    def grad(self, X: Sample, Y: Sample) -> np.ndarray:
        if self.kind == "cmd":
            return cmd_k_grad(X, Y, self.K)
        if self.kind == "mmd":
            return mmd2_grad(X, Y, self.beta)
        return mkl_grad(X, Y)

    def describe(self) -> dict:
        out = {"kind": self.kind, "lambda": self.lam}
        if self.kind == "cmd":
            out["K"] = self.K
        elif self.kind == "mmd":
            out["beta"] = self.beta
        return out


@dataclass(frozen=True)
class DiscrepancyValue:
    value: float
    per_term: tuple | None = None


def _check_pair(X: Sample, Y: Sample, need_bounds: bool = False) -> None:
    if X.N != Y.N:
        raise ValueError(f"dimension mismatch: X has N={X.N}, Y has N={Y.N}")
    if need_bounds and X.bounds != Y.bounds:
        raise ValueError(f"bounds mismatch: {X.bounds} vs {Y.bounds}")


# --------------------------------------------------------------------------- #
# central moment discrepancy
# --------------------------------------------------------------------------- #

def central_moments(X, k: int) -> np.ndarray:
    """Coordinate-wise biased (divide-by-n) sample central moment of order ``k``."""
    data = X.data if isinstance(X, Sample) else np.atleast_2d(np.asarray(X, dtype=float))
    if k < 1:
        raise ValueError("k must be >= 1")
    if k == 1:
        return np.zeros(data.shape[1])
    dev = data - data.mean(axis=0)
    return np.mean(dev**k, axis=0)


def _moment_features(data: np.ndarray, K: int) -> list[np.ndarray]:
    """Mean followed by central moments of orders 2..K."""
    mean = data.mean(axis=0)
    dev = data - mean
    feats = [mean]
    power = dev
    for _ in range(2, K + 1):
        power = power * dev
        feats.append(power.mean(axis=0))
    return feats


def cmd_k(X: Sample, Y: Sample, K: int = 5) -> DiscrepancyValue:
    """Central moment discrepancy of the first ``K`` orders.

    Term 1 is the distance between the means scaled by ``1/span``; term ``k``
    is the distance between order-``k`` central moment vectors scaled by
    ``1/span**k``, where ``span`` is the width of the shared bounds.
    """
    _check_pair(X, Y, need_bounds=True)
    if K < 1:
        raise ValueError("K must be >= 1")
    span = X.bounds.span
    fx = _moment_features(X.data, K)
    fy = _moment_features(Y.data, K)
    terms = tuple(
        float(np.linalg.norm(a - b)) / span ** (k + 1) for k, (a, b) in enumerate(zip(fx, fy))
    )
    return DiscrepancyValue(value=float(sum(terms)), per_term=terms)


def cmd_k_grad(X: Sample, Y: Sample, K: int = 5) -> np.ndarray:
    """Gradient of ``cmd_k(X, Y, K).value`` with respect to the rows of ``X``.

    A term whose moment difference is exactly zero contributes zero
    (subgradient at the kink of the norm).
    """
    _check_pair(X, Y, need_bounds=True)
    span = X.bounds.span
    x = X.data
    n = x.shape[0]
    fx = _moment_features(x, K)
    fy = _moment_features(Y.data, K)

    dev = x - fx[0]
    grad = np.zeros_like(x)
    diff = fx[0] - fy[0]
    dist = np.linalg.norm(diff)
    if dist > 0:
        grad += (diff / (dist * span * n))[None, :]

    # d C_k / d x_ij = (k/n) * (dev_ij^(k-1) - mean_i dev_ij^(k-1)); the second
    # part is the dependence of C_k on the mean through the centering.
    prev = dev
    for k in range(2, K + 1):
        diff = fx[k - 1] - fy[k - 1]
        dist = np.linalg.norm(diff)
        if dist > 0:
            unit = diff / dist
            grad += (k / (n * span**k)) * (prev - prev.mean(axis=0)) * unit
        prev = prev * dev
    return grad


def cmd_term_bound(k: int, N: int) -> float:
    """Upper bound on the order-``k`` normalized term for distributions on a box in R^N."""
    if k < 1 or N < 1:
        raise ValueError("k and N must be >= 1")
    return 2.0 * np.sqrt(N) * ((k / (k + 1)) ** k / (k + 1) + 0.5 ** (1 + k))


# --------------------------------------------------------------------------- #
# maximum mean discrepancy
# --------------------------------------------------------------------------- #

def _sq_norms(a: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", a, a)


def _kernel_blocks(a: np.ndarray, b: np.ndarray, beta: float):
    """Yield ``(row_slice, K_block)`` for the Gaussian kernel matrix ``K(a, b)``."""
    aa, bb = _sq_norms(a), _sq_norms(b)
    step = max(1, _KERNEL_BLOCK_ENTRIES // max(1, b.shape[0]))
    for start in range(0, a.shape[0], step):
        sl = slice(start, min(start + step, a.shape[0]))
        sq = aa[sl, None] + bb[None, :] - 2.0 * (a[sl] @ b.T)
        np.maximum(sq, 0.0, out=sq)
        sq *= -beta
        yield sl, np.exp(sq, out=sq)


def _kernel_mean(a: np.ndarray, b: np.ndarray, beta: float) -> float:
    total = 0.0
    for _, block in _kernel_blocks(a, b, beta):
        total += float(block.sum())
    return total / (a.shape[0] * b.shape[0])


def _canonical(a: np.ndarray, b: np.ndarray):
    # Fixes the argument order of the cross term so mmd2(X, Y) == mmd2(Y, X) bit for bit.
    ka = (a.shape, a.tobytes())
    kb = (b.shape, b.tobytes())
    return (a, b) if ka <= kb else (b, a)


def mmd2(X: Sample, Y: Sample, beta: float = 1.0) -> float:
    """Biased squared MMD with kernel ``exp(-beta * ||x - y||^2)``.

    All pairs including self-pairs enter the three kernel means. The raw
    value is returned without clamping, so round-off may make it slightly
    negative.
    """
    _check_pair(X, Y)
    if not beta > 0:
        raise ValueError("beta must be > 0")
    x, y = X.data, Y.data
    kxx = _kernel_mean(x, x, beta)
    kyy = _kernel_mean(y, y, beta)
    kxy = _kernel_mean(*_canonical(x, y), beta)
    return (kxx + kyy) - 2.0 * kxy


def _weighted_offsets(a: np.ndarray, b: np.ndarray, beta: float) -> np.ndarray:
    """Row ``i`` holds ``sum_j K(a_i, b_j) * (a_i - b_j)``."""
    out = np.empty_like(a)
    for sl, block in _kernel_blocks(a, b, beta):
        out[sl] = a[sl] * block.sum(axis=1)[:, None] - block @ b
    return out


def mmd2_grad(X: Sample, Y: Sample, beta: float = 1.0) -> np.ndarray:
    """Gradient of :func:`mmd2` with respect to the rows of ``X``."""
    _check_pair(X, Y)
    x, y = X.data, Y.data
    n, m = x.shape[0], y.shape[0]
    return 4.0 * beta * (
        _weighted_offsets(x, y, beta) / (n * m) - _weighted_offsets(x, x, beta) / (n * n)
    )


# --------------------------------------------------------------------------- #
# mean KL
# --------------------------------------------------------------------------- #

def mkl(X: Sample, Y: Sample) -> float:
    """Symmetrised KL divergence of the mean activations (natural log, means clamped at 1e-8)."""
    _check_pair(X, Y)
    mx = np.maximum(X.data.mean(axis=0), MKL_EPS)
    my = np.maximum(Y.data.mean(axis=0), MKL_EPS)
    return float(np.sum(mx * np.log(mx / my) + my * np.log(my / mx)))


def mkl_grad(X: Sample, Y: Sample) -> np.ndarray:
    """Gradient of :func:`mkl` with respect to the rows of ``X``; zero where the clamp is active."""
    _check_pair(X, Y)
    raw = X.data.mean(axis=0)
    mx = np.maximum(raw, MKL_EPS)
    my = np.maximum(Y.data.mean(axis=0), MKL_EPS)
    d = np.log(mx / my) + 1.0 - my / mx
    d = np.where(raw >= MKL_EPS, d, 0.0)
    return np.broadcast_to(d / X.n, X.data.shape).copy()
