"""Unsupervised domain-adaptation training, reverse cross-validation and sensitivity sweeps."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import network as nw
from .discrepancy import DiscrepancySpec
from .optim import make_optimizer
from .samples import DomainDataset, LabeledSample, resample_source_balanced

THREADS_ENV = "MOMENT_MATCH_THREADS"

# Tuning grids for the MMD baseline: 10 log-spaced values each.
MMD_LAMBDA_GRID = tuple(np.logspace(np.log10(0.1), np.log10(500.0), 10))
MMD_BETA_GRID = tuple(np.logspace(np.log10(0.01), np.log10(10.0), 10))


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, step: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, step {step}")
        self.epoch = epoch
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    """Everything needed to reproduce one training run.

    ``discrepancy=None`` trains the plain classifier without a target pass.
    """

    layer_specs: tuple
    discrepancy: DiscrepancySpec | None = field(default_factory=DiscrepancySpec)
    optimizer: str = "adadelta"
    optimizer_params: tuple = ()
    epochs: int = 50
    batch_size: int = 64
    seed: int = 0
    balance_source: bool = False

    def __post_init__(self):
        object.__setattr__(self, "layer_specs", tuple(self.layer_specs))
        if isinstance(self.optimizer_params, dict):
            object.__setattr__(self, "optimizer_params", tuple(sorted(self.optimizer_params.items())))
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        nw.validate_specs(self.layer_specs)

    def make_optimizer(self):
        return make_optimizer(self.optimizer, **dict(self.optimizer_params))

    def with_discrepancy(self, spec: DiscrepancySpec | None) -> "TrainConfig":
        return replace(self, discrepancy=spec)

    def with_hidden_nodes(self, nodes: int) -> "TrainConfig":
        specs = list(self.layer_specs)
        h = next(i for i, s in enumerate(specs) if s.regularized)
        specs[h] = replace(specs[h], out_dim=nodes)
        specs[h + 1] = replace(specs[h + 1], in_dim=nodes)
        return replace(self, layer_specs=tuple(specs))

    def describe(self) -> dict:
        return {
            "layers": [s.to_dict() for s in self.layer_specs],
            "discrepancy": None if self.discrepancy is None else self.discrepancy.describe(),
            "optimizer": dict(kind=self.optimizer, **dict(self.optimizer_params)),
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "balance_source": self.balance_source,
        }


def default_config(input_dim: int, n_classes: int, hidden: int = 16, **kwargs) -> TrainConfig:
    """Desk-scale defaults: one sigmoid hidden layer, CMD with K=5 and lambda=1, Adadelta."""
    specs = nw.classifier_specs(input_dim, hidden, n_classes, kwargs.pop("activation", "sigmoid"))
    return TrainConfig(layer_specs=specs, **kwargs)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    task_loss: float
    reg_value: float
    source_acc: float


@dataclass(eq=False)
class RunResult:
    state: nw.NetworkState
    history: list[EpochRecord]
    target_test_accuracy: float
    config: TrainConfig


def fit(
    source: LabeledSample,
    target_inputs: np.ndarray,
    config: TrainConfig,
    init_state: nw.NetworkState | None = None,
) -> tuple[nw.NetworkState, list[EpochRecord]]:
    """Train on labeled source and unlabeled target inputs only.

    Each epoch shuffles both domains and walks ``ceil(min(n_s, n_t) / batch)``
    paired batches. With ``balance_source`` every source batch is instead a
    fresh class-balanced draw from the full source sample.
    """
    target_inputs = np.asarray(target_inputs, dtype=float)
    specs = list(config.layer_specs)
    if source.input_dim != specs[0].in_dim or target_inputs.shape[1] != specs[0].in_dim:
        raise ValueError("dataset input dimension does not match the first layer")
    if source.n_classes != specs[-1].out_dim:
        raise ValueError("number of classes does not match the output layer")

    init_seed, loop_seed = np.random.SeedSequence(config.seed).generate_state(2)
    state = init_state.copy() if init_state is not None else nw.init_network(specs, int(init_seed))
    rng = np.random.default_rng(int(loop_seed))
    opt = config.make_optimizer()
    spec = config.discrepancy

    n_s, n_t = source.n, target_inputs.shape[0]
    n_pairs = min(n_s, n_t)
    bs = config.batch_size
    history = []
    for epoch in range(config.epochs):
        src_order = rng.permutation(n_s)
        tgt_order = rng.permutation(n_t)
        task_sum = reg_sum = 0.0
        steps = math.ceil(n_pairs / bs)
        for step in range(steps):
            lo, hi = step * bs, min((step + 1) * bs, n_pairs)
            if config.balance_source:
                batch = resample_source_balanced(source, max(hi - lo, source.n_classes), rng)
            else:
                batch = source.take(src_order[lo:hi])
            res = nw.loss_and_grad(state, batch, target_inputs[tgt_order[lo:hi]], spec)
            if not np.isfinite(res.loss):
                raise TrainingDiverged(epoch, step, res.loss)
            state = state.with_params(opt.step(state.params, res.grads))
            task_sum += res.task_loss
            reg_sum += res.reg_value
        history.append(
            EpochRecord(epoch, task_sum / steps, reg_sum / steps, nw.accuracy(state, source))
        )
    return state, history


def train(dataset: DomainDataset, config: TrainConfig) -> RunResult:
    """Fit on the source and unlabeled target; score once on the labeled target test split."""
    state, history = fit(dataset.source, dataset.target_unlabeled, config)
    return RunResult(state, history, nw.accuracy(state, dataset.target_test), config)


# --------------------------------------------------------------------------- #
# reverse cross-validation
# --------------------------------------------------------------------------- #

def stratified_split(sample: LabeledSample, holdout: float, seed: int):
    rng = np.random.default_rng(seed)
    ids = sample.class_ids
    train_idx, val_idx = [], []
    for c in range(sample.n_classes):
        members = rng.permutation(np.flatnonzero(ids == c))
        k = int(round(holdout * members.size))
        if k < 2:
            raise ValueError(f"class {c} would have {k} validation examples; need at least 2")
        val_idx.append(members[:k])
        train_idx.append(members[k:])
    return sample.take(np.sort(np.concatenate(train_idx))), sample.take(np.sort(np.concatenate(val_idx)))


def reverse_score(source: LabeledSample, target_inputs, config: TrainConfig, holdout: float = 0.2) -> float:
    """Reverse-validation accuracy of one configuration.

    The forward model is trained source-train -> target, the target is
    self-labelled with it, and a reverse model initialised from the forward
    weights is trained target -> source-train. Its accuracy on the held-out
    source split is the score.
    """
    src_train, src_val = stratified_split(source, holdout, config.seed)
    forward_state, _ = fit(src_train, target_inputs, config)
    pseudo = nw.predict(forward_state, target_inputs)
    reverse_source = LabeledSample.from_ids(target_inputs, pseudo, source.n_classes)
    reverse_cfg = config
    if config.balance_source and len(np.unique(pseudo)) < source.n_classes:
        reverse_cfg = replace(config, balance_source=False)
    reverse_state, _ = fit(reverse_source, src_train.inputs, reverse_cfg, init_state=forward_state)
    return nw.accuracy(reverse_state, src_val)


def reverse_cross_validate(dataset: DomainDataset, base_config: TrainConfig, grid):
    """Pick the discrepancy setting with the best reverse-validation score.

    Only ``dataset.source`` and ``dataset.target_unlabeled`` are read. Ties go
    to the earlier grid entry. Returns ``(best_spec, scores)``.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("grid is empty")
    scores = [
        reverse_score(dataset.source, dataset.target_unlabeled, base_config.with_discrepancy(s))
        for s in grid
    ]
    best = int(np.argmax(scores))
    return grid[best], scores


# --------------------------------------------------------------------------- #
# sensitivity sweeps
# --------------------------------------------------------------------------- #

AXES = ("K", "lambda", "beta", "hidden_nodes")


@dataclass(eq=False)
class SweepResult:
    """Accuracies keyed by ``(value, task, seed)``.

    For the ``K``/``lambda``/``beta`` axes ratios are relative to the
    reference value; for ``hidden_nodes`` they are relative to the
    source-only model with the same width.
    """

    axis: str
    values: list
    tasks: list[str]
    seeds: list[int]
    reference: object
    accuracy: dict
    baseline: dict = field(default_factory=dict)

    def _denominator(self, value, task, seed) -> float:
        if self.axis == "hidden_nodes":
            return self.baseline[(value, task, seed)]
        return self.accuracy[(self.reference, task, seed)]

    def ratio(self, value, task, seed) -> float:
        den = self._denominator(value, task, seed)
        return self.accuracy[(value, task, seed)] / den if den > 0 else float("nan")

    def mean_accuracy(self, value, task) -> float:
        return float(np.mean([self.accuracy[(value, task, s)] for s in self.seeds]))

    def task_ratio(self, value, task) -> float:
        """Ratio of seed-averaged accuracies."""
        if self.axis == "hidden_nodes":
            den = float(np.mean([self.baseline[(value, task, s)] for s in self.seeds]))
        else:
            den = self.mean_accuracy(self.reference, task)
        return self.mean_accuracy(value, task) / den if den > 0 else float("nan")

    def rows(self):
        """``(axis_value, task, seed, accuracy, ratio)`` in grid order."""
        for v in self.values:
            for t in self.tasks:
                for s in self.seeds:
                    yield v, t, s, self.accuracy[(v, t, s)], self.ratio(v, t, s)


def _apply_axis(config: TrainConfig, axis: str, value) -> TrainConfig:
    spec = config.discrepancy
    if axis == "hidden_nodes":
        return config.with_hidden_nodes(int(value))
    if spec is None:
        raise ValueError(f"axis {axis!r} needs a discrepancy in the base config")
    if axis == "K":
        if spec.kind != "cmd":
            raise ValueError("axis K requires the cmd discrepancy")
        return config.with_discrepancy(replace(spec, K=int(value)))
    if axis == "beta":
        if spec.kind != "mmd":
            raise ValueError("axis beta requires the mmd discrepancy")
        return config.with_discrepancy(replace(spec, beta=float(value)))
    if axis == "lambda":
        return config.with_discrepancy(replace(spec, lam=float(value)))
    raise ValueError(f"unknown axis {axis!r}; choose from {AXES}")


def _run_cell(job):
    key, dataset, config = job
    return key, train(dataset, config).target_test_accuracy


def default_workers() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def sensitivity_sweep(
    tasks,
    base_config: TrainConfig,
    axis: str,
    values,
    reference=None,
    seeds=(0,),
    workers: int | None = None,
) -> SweepResult:
    """Train one model per (task, value, seed) and collect accuracies and ratios.

    ``reference`` must be one of ``values`` except on the ``hidden_nodes``
    axis, where each width is compared against a source-only run instead.
    Cells run in a process pool when ``workers > 1``.
    """
    tasks = list(tasks)
    values = list(values)
    seeds = [int(s) for s in seeds]
    if axis not in AXES:
        raise ValueError(f"unknown axis {axis!r}; choose from {AXES}")
    if not seeds:
        raise ValueError("seeds must be nonempty")
    if not values:
        raise ValueError("values must be nonempty")
    if axis != "hidden_nodes" and reference not in values:
        raise ValueError(f"reference {reference!r} is not among the grid values")
    if axis == "hidden_nodes" and reference is not None and reference not in values:
        raise ValueError(f"reference {reference!r} is not among the grid values")
    names = [t.name for t in tasks]
    if len(set(names)) != len(names):
        raise ValueError("task names must be unique")

    jobs = []
    for v in values:
        cfg_v = _apply_axis(base_config, axis, v)
        for t in tasks:
            for s in seeds:
                jobs.append((("reg", v, t.name, s), t, replace(cfg_v, seed=s)))
                if axis == "hidden_nodes":
                    plain = replace(cfg_v, seed=s).with_discrepancy(None)
                    jobs.append((("base", v, t.name, s), t, plain))

    workers = default_workers() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = dict(pool.map(_run_cell, jobs))
    else:
        results = dict(map(_run_cell, jobs))

    acc = {k[1:]: v for k, v in results.items() if k[0] == "reg"}
    base = {k[1:]: v for k, v in results.items() if k[0] == "base"}
    return SweepResult(axis, values, names, seeds, reference, acc, base)
