"""Feedforward classifier with a bounded, regularized hidden layer.

The loss is mean cross-entropy on a source batch plus ``lam`` times a
discrepancy between the source and target activations of the flagged hidden
layer. Gradients of the discrepancy flow back through both branches into the
shared parameters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .discrepancy import DiscrepancySpec
from .samples import Bounds, LabeledSample, Sample

LOG_EPS = 1e-12
ACTIVATIONS = ("sigmoid", "tanh", "softmax", "clipped_relu")


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "sigmoid"
    regularized: bool = False
    clip: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError("layer dimensions must be >= 1")
        object.__setattr__(self, "clip", (float(self.clip[0]), float(self.clip[1])))
        if self.activation == "clipped_relu" and not self.clip[0] < self.clip[1]:
            raise ValueError(f"clipped_relu needs lo < hi, got {self.clip}")

    @property
    def bounds(self) -> Bounds:
        if self.activation == "sigmoid":
            return Bounds(0.0, 1.0)
        if self.activation == "tanh":
            return Bounds(-1.0, 1.0)
        if self.activation == "clipped_relu":
            return Bounds(*self.clip)
        return Bounds(0.0, 1.0)

    def to_dict(self) -> dict:
        d = {
            "in_dim": self.in_dim,
            "out_dim": self.out_dim,
            "activation": self.activation,
            "regularized": self.regularized,
        }
        if self.activation == "clipped_relu":
            d["clip"] = list(self.clip)
        return d


def classifier_specs(
    input_dim: int, hidden: int, n_classes: int, activation: str = "sigmoid", clip=(0.0, 1.0)
) -> list[LayerSpec]:
    """One regularized hidden layer followed by a softmax output."""
    return [
        LayerSpec(input_dim, hidden, activation, regularized=True, clip=clip),
        LayerSpec(hidden, n_classes, "softmax"),
    ]


def validate_specs(specs) -> None:
    specs = list(specs)
    if len(specs) < 2:
        raise ValueError("need at least one hidden layer and an output layer")
    for i, (a, b) in enumerate(zip(specs, specs[1:])):
        if a.out_dim != b.in_dim:
            raise ValueError(
                f"layer {i} outputs {a.out_dim} units but layer {i + 1} expects {b.in_dim}"
            )
    if specs[-1].activation != "softmax":
        raise ValueError("the final layer must use softmax")
    if any(s.activation == "softmax" for s in specs[:-1]):
        raise ValueError("softmax is only permitted on the final layer")
    flagged = [i for i, s in enumerate(specs) if s.regularized]
    if len(flagged) != 1 or flagged[0] == len(specs) - 1:
        raise ValueError("exactly one hidden layer must be flagged as regularized")


@dataclass(eq=False)
class Layer:
    weights: np.ndarray
    bias: np.ndarray
    spec: LayerSpec


@dataclass(eq=False)
class NetworkState:
    layers: list[Layer]
    rng_seed: int = 0

    def __post_init__(self):
        validate_specs([l.spec for l in self.layers])
        for l in self.layers:
            if l.weights.shape != (l.spec.out_dim, l.spec.in_dim) or l.bias.shape != (l.spec.out_dim,):
                raise ValueError("parameter shapes disagree with the layer spec")
            if not (np.all(np.isfinite(l.weights)) and np.all(np.isfinite(l.bias))):
                raise ValueError("network parameters must be finite")

    @property
    def specs(self) -> list[LayerSpec]:
        return [l.spec for l in self.layers]

    @property
    def hidden_index(self) -> int:
        return next(i for i, l in enumerate(self.layers) if l.spec.regularized)

    @property
    def params(self) -> list[np.ndarray]:
        """Flat parameter list ``[W0, b0, W1, b1, ...]``."""
        out = []
        for l in self.layers:
            out.extend([l.weights, l.bias])
        return out

    def with_params(self, params) -> "NetworkState":
        params = list(params)
        layers = [
            Layer(np.asarray(params[2 * i], dtype=float), np.asarray(params[2 * i + 1], dtype=float), l.spec)
            for i, l in enumerate(self.layers)
        ]
        return NetworkState(layers, self.rng_seed)

    def copy(self) -> "NetworkState":
        return self.with_params([p.copy() for p in self.params])

    def __eq__(self, other):
        if not isinstance(other, NetworkState):
            return NotImplemented
        return (
            self.rng_seed == other.rng_seed
            and self.specs == other.specs
            and all(np.array_equal(a, b) for a, b in zip(self.params, other.params))
        )


def init_network(specs, seed: int = 0) -> NetworkState:
    """Uniform fan-based init in ``[-s, s]``, ``s = sqrt(6 / (in + out))``; zero biases."""
    specs = list(specs)
    validate_specs(specs)
    rng = np.random.default_rng(seed)
    layers = []
    for s in specs:
        limit = np.sqrt(6.0 / (s.in_dim + s.out_dim))
        w = rng.uniform(-limit, limit, size=(s.out_dim, s.in_dim))
        layers.append(Layer(w, np.zeros(s.out_dim), s))
    return NetworkState(layers, seed)


# --------------------------------------------------------------------------- #
# forward / backward
# --------------------------------------------------------------------------- #

def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _activate(z: np.ndarray, spec: LayerSpec) -> np.ndarray:
    if spec.activation == "sigmoid":
        # Split by sign so exp never overflows.
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if spec.activation == "tanh":
        return np.tanh(z)
    if spec.activation == "clipped_relu":
        return np.clip(z, *spec.clip)
    return softmax(z)


def _activation_derivative(z: np.ndarray, a: np.ndarray, spec: LayerSpec) -> np.ndarray:
    if spec.activation == "sigmoid":
        return a * (1.0 - a)
    if spec.activation == "tanh":
        return 1.0 - a * a
    lo, hi = spec.clip
    return ((z > lo) & (z < hi)).astype(float)


@dataclass(eq=False)
class ForwardTrace:
    inputs: np.ndarray
    pre_activations: list[np.ndarray]
    activations: list[np.ndarray]
    hidden_index: int
    hidden: Sample = field(repr=False)

    @property
    def output(self) -> np.ndarray:
        return self.activations[-1]


def forward(state: NetworkState, inputs) -> ForwardTrace:
    x = np.asarray(inputs, dtype=float)
    if x.ndim != 2 or x.shape[1] != state.layers[0].spec.in_dim:
        raise ValueError(
            f"expected inputs of shape (n, {state.layers[0].spec.in_dim}), got {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("inputs contain non-finite values")
    pre, acts = [], []
    a = x
    for layer in state.layers:
        z = a @ layer.weights.T + layer.bias
        a = _activate(z, layer.spec)
        pre.append(z)
        acts.append(a)
    h = state.hidden_index
    hidden = Sample(acts[h], state.layers[h].spec.bounds)
    return ForwardTrace(x, pre, acts, h, hidden)


def _backward(state: NetworkState, trace: ForwardTrace, d_logits, d_hidden) -> list[np.ndarray]:
    """Parameter gradients given upstream gradients on the output logits and/or the hidden layer.

    ``d_logits`` is the gradient w.r.t. the last pre-activation (or None);
    ``d_hidden`` the gradient w.r.t. the regularized layer's activations (or None).
    """
    grads: list[np.ndarray] = [None] * (2 * len(state.layers))
    h = trace.hidden_index
    last = len(state.layers) - 1
    dz = d_logits
    da = None
    for i in range(last, -1, -1):
        spec = state.layers[i].spec
        if i < last:
            if i == h and d_hidden is not None:
                da = d_hidden if da is None else da + d_hidden
            dz = None if da is None else da * _activation_derivative(
                trace.pre_activations[i], trace.activations[i], spec
            )
        below = trace.inputs if i == 0 else trace.activations[i - 1]
        W = state.layers[i].weights
        if dz is None:
            grads[2 * i] = np.zeros_like(W)
            grads[2 * i + 1] = np.zeros(W.shape[0])
            da = None
        else:
            grads[2 * i] = dz.T @ below
            grads[2 * i + 1] = dz.sum(axis=0)
            da = dz @ W
    return grads


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    return float(-np.mean(np.sum(labels * np.log(np.maximum(probs, LOG_EPS)), axis=1)))


@dataclass(eq=False)
class LossResult:
    loss: float
    task_loss: float
    reg_value: float
    grads: list[np.ndarray]


def loss_and_grad(
    state: NetworkState,
    source: LabeledSample,
    target_inputs,
    spec: DiscrepancySpec | None,
) -> LossResult:
    """Regularized objective on one source batch and one target batch, with its exact gradient.

    ``spec=None`` gives the plain classifier (no target pass, ``reg_value`` 0).
    With ``spec.lam == 0`` the regularizer is still evaluated for diagnostics
    but contributes nothing to the gradient.
    """
    if source.n < 1:
        raise ValueError("source batch is empty")
    if source.n_classes != state.layers[-1].spec.out_dim:
        raise ValueError("label width does not match the output layer")
    src = forward(state, source.inputs)
    probs = src.output
    labels = source.labels
    task_loss = cross_entropy(probs, labels)

    # Softmax + clamped cross-entropy: rows whose true-class probability sits
    # below the clamp have zero gradient.
    p_true = np.sum(probs * labels, axis=1)
    d_logits = (probs - labels) / source.n
    d_logits[p_true < LOG_EPS] = 0.0

    reg_value = 0.0
    d_src_hidden = None
    tgt = None
    if spec is not None:
        target_inputs = np.asarray(target_inputs, dtype=float)
        if target_inputs.ndim != 2 or target_inputs.shape[0] < 1:
            raise ValueError("target batch is empty")
        tgt = forward(state, target_inputs)
        reg_value = spec.value(src.hidden, tgt.hidden)
        if spec.lam > 0:
            d_src_hidden = spec.lam * spec.grad(src.hidden, tgt.hidden)
            d_tgt_hidden = spec.lam * spec.grad(tgt.hidden, src.hidden)

    grads = _backward(state, src, d_logits, d_src_hidden)
    if d_src_hidden is not None:
        tgt_grads = _backward(state, tgt, None, d_tgt_hidden)
        grads = [a + b for a, b in zip(grads, tgt_grads)]
    loss = task_loss + (spec.lam * reg_value if spec is not None else 0.0)
    return LossResult(loss, task_loss, reg_value, grads)


def predict(state: NetworkState, inputs) -> np.ndarray:
    """Class ids by argmax of the softmax output; ties go to the lowest index."""
    return np.argmax(forward(state, inputs).output, axis=1)


def accuracy(state: NetworkState, sample: LabeledSample) -> float:
    return float(np.mean(predict(state, sample.inputs) == sample.class_ids))


# --------------------------------------------------------------------------- #
# checkpoints
# --------------------------------------------------------------------------- #

def state_to_dict(state: NetworkState) -> dict:
    return {
        "seed": state.rng_seed,
        "layers": [
            {
                "spec": l.spec.to_dict(),
                "weights": l.weights.tolist(),
                "bias": l.bias.tolist(),
            }
            for l in state.layers
        ],
    }


def state_from_dict(d: dict) -> NetworkState:
    layers = []
    for entry in d["layers"]:
        s = dict(entry["spec"])
        if "clip" in s:
            s["clip"] = tuple(s["clip"])
        spec = LayerSpec(**s)
        w = np.array(entry["weights"], dtype=float).reshape(spec.out_dim, spec.in_dim)
        layers.append(Layer(w, np.array(entry["bias"], dtype=float), spec))
    return NetworkState(layers, int(d["seed"]))


def save_checkpoint(state: NetworkState, path) -> None:
    """Write a JSON checkpoint; floats use shortest round-trip repr, so reloads are bit-exact."""
    Path(path).write_text(json.dumps(state_to_dict(state), indent=1) + "\n", encoding="utf-8")


def load_checkpoint(path) -> NetworkState:
    return state_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
