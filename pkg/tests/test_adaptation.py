import math
from dataclasses import replace

import numpy as np
import pytest

from moment_match import adaptation as ad
from moment_match import network as nw
from moment_match.discrepancy import DiscrepancySpec
from moment_match.samples import make_synthetic_pair


@pytest.fixture(scope="module")
def task():
    return make_synthetic_pair("shift", 0.8, 120, 90, 200, seed=3)


def quick_config(**kw):
    kw.setdefault("epochs", 3)
    kw.setdefault("batch_size", 32)
    return ad.default_config(2, 2, hidden=6, **kw)


class Spy:
    """Dataset stand-in that logs when the labeled target split is read."""

    def __init__(self, dataset, log, forbid_test=False):
        self._d, self._log, self._forbid = dataset, log, forbid_test
        self.source = dataset.source
        self.target_unlabeled = dataset.target_unlabeled
        self.name = dataset.name

    @property
    def target_test(self):
        if self._forbid:
            raise AssertionError("target_test was read")
        self._log.append("test")
        return self._d.target_test


def test_config_validation():
    with pytest.raises(ValueError):
        quick_config(epochs=0)
    with pytest.raises(ValueError):
        quick_config(batch_size=0)


def test_lambda_zero_matches_plain_classifier(task):
    cfg = quick_config(discrepancy=DiscrepancySpec.cmd(5, lam=0.0))
    a = ad.train(task, cfg)
    b = ad.train(task, cfg.with_discrepancy(None))
    assert a.state == b.state
    assert all(h.reg_value > 0 for h in a.history)
    assert all(h.reg_value == 0 for h in b.history)


def test_training_is_deterministic(task):
    cfg = quick_config(seed=11)
    a, b = ad.train(task, cfg), ad.train(task, cfg)
    assert a.state == b.state
    assert a.history == b.history
    assert a.target_test_accuracy == b.target_test_accuracy
    assert len(a.history) == cfg.epochs


def test_different_seeds_differ(task):
    assert ad.train(task, quick_config(seed=1)).state != ad.train(task, quick_config(seed=2)).state


def test_no_shift_regularizer_stays_small():
    # worst case over these seeds is a 2.59x rise above the first epoch
    for seed in range(10):
        d = make_synthetic_pair("shift", 0.0, 300, 300, 100, seed=seed)
        res = ad.train(d, ad.default_config(2, 2, epochs=50, seed=seed))
        first = res.history[0].reg_value
        assert max(h.reg_value for h in res.history) <= 3 * first


def test_paired_batch_count(task, monkeypatch):
    calls = []
    real = nw.loss_and_grad

    def counting(state, source, target, spec):
        calls.append((source.n, len(target)))
        return real(state, source, target, spec)

    monkeypatch.setattr(nw, "loss_and_grad", counting)
    cfg = quick_config(epochs=2, batch_size=25)
    ad.train(task, cfg)
    per_epoch = math.ceil(min(120, 90) / 25)
    assert len(calls) == 2 * per_epoch
    assert all(s == t for s, t in calls)
    assert calls[per_epoch - 1] == (90 - 25 * (per_epoch - 1),) * 2


def test_balanced_source_batches(monkeypatch):
    d = make_synthetic_pair("shift", 0.5, 200, 100, 50, seed=0)
    keep = np.r_[np.flatnonzero(d.source.class_ids == 0), np.flatnonzero(d.source.class_ids == 1)[:10]]
    skewed = type(d)(d.source.take(keep), d.target_unlabeled, d.target_test, "skewed")
    hists = []
    real = nw.loss_and_grad

    def spy(state, source, target, spec):
        hists.append(np.bincount(source.class_ids, minlength=2))
        return real(state, source, target, spec)

    monkeypatch.setattr(nw, "loss_and_grad", spy)
    ad.train(skewed, quick_config(balance_source=True, epochs=1))
    assert all(abs(h[0] - h[1]) <= 1 for h in hists)


def test_target_labels_read_only_after_training(task, monkeypatch):
    log = []
    real = nw.loss_and_grad

    def step(*args):
        log.append("step")
        return real(*args)

    monkeypatch.setattr(nw, "loss_and_grad", step)
    ad.train(Spy(task, log), quick_config())
    assert log.count("test") == 1 and log[-1] == "test"


def test_nan_loss_aborts_with_location(task, monkeypatch):
    def broken(state, source, target, spec):
        return nw.LossResult(float("nan"), float("nan"), 0.0, [np.zeros_like(p) for p in state.params])

    monkeypatch.setattr(nw, "loss_and_grad", broken)
    with pytest.raises(ad.TrainingDiverged, match="epoch 0, step 0"):
        ad.train(task, quick_config())


def test_dimension_mismatch(task):
    cfg = ad.default_config(3, 2, epochs=1)
    with pytest.raises(ValueError):
        ad.train(task, cfg)


# ---- reverse cross-validation --------------------------------------------- #

def test_reverse_cv_single_candidate(task):
    spec = DiscrepancySpec.cmd(5)
    best, scores = ad.reverse_cross_validate(Spy(task, [], forbid_test=True), quick_config(), [spec])
    assert best == spec and len(scores) == 1 and 0.0 <= scores[0] <= 1.0


def test_reverse_cv_two_candidates_deterministic(task):
    grid = [DiscrepancySpec.cmd(5, lam=0.0), DiscrepancySpec.cmd(5, lam=1.0)]
    spy = Spy(task, [], forbid_test=True)
    a = ad.reverse_cross_validate(spy, quick_config(seed=4), grid)
    b = ad.reverse_cross_validate(spy, quick_config(seed=4), grid)
    assert a == b
    assert len(a[1]) == 2 and a[0] in grid


def test_reverse_cv_tie_goes_to_first(task, monkeypatch):
    monkeypatch.setattr(ad, "reverse_score", lambda *a, **k: 0.5)
    grid = [DiscrepancySpec.mmd(b) for b in (0.1, 1.0, 10.0)]
    assert ad.reverse_cross_validate(task, quick_config(), grid)[0] == grid[0]


def test_reverse_cv_errors(task):
    with pytest.raises(ValueError, match="empty"):
        ad.reverse_cross_validate(task, quick_config(), [])
    tiny = type(task)(task.source.take(np.arange(6)), task.target_unlabeled, task.target_test)
    with pytest.raises(ValueError, match="validation"):
        ad.reverse_cross_validate(tiny, quick_config(), [DiscrepancySpec.cmd()])


def test_stratified_split_proportions(task):
    tr, va = ad.stratified_split(task.source, 0.2, seed=0)
    assert tr.n + va.n == task.source.n
    for c in range(2):
        total = np.sum(task.source.class_ids == c)
        assert np.sum(va.class_ids == c) == round(0.2 * total)


def test_mmd_tuning_grids():
    np.testing.assert_allclose([ad.MMD_LAMBDA_GRID[0], ad.MMD_LAMBDA_GRID[-1]], [0.1, 500])
    np.testing.assert_allclose([ad.MMD_BETA_GRID[0], ad.MMD_BETA_GRID[-1]], [0.01, 10])
    assert len(ad.MMD_LAMBDA_GRID) == len(ad.MMD_BETA_GRID) == 10
    ratios = np.diff(np.log(ad.MMD_BETA_GRID))
    np.testing.assert_allclose(ratios, ratios[0])


# ---- sweeps ---------------------------------------------------------------- #

def test_sweep_single_value_ratio_one(task):
    r = ad.sensitivity_sweep([task], quick_config(), "K", [5], 5, seeds=[0], workers=1)
    assert list(r.rows())[0][4] == 1.0
    assert r.task_ratio(5, task.name) == 1.0


def test_sweep_k_axis_shape():
    tasks = [make_synthetic_pair("shift", 0.8, 60, 60, 60, seed=1),
             make_synthetic_pair("rotation", 0.6, 60, 60, 60, seed=2)]
    r = ad.sensitivity_sweep(tasks, quick_config(epochs=1), "K", list(range(1, 8)), 5, seeds=[0, 1], workers=1)
    rows = list(r.rows())
    assert len(rows) == 7 * 2 * 2
    assert all(row[4] == 1.0 for row in rows if row[0] == 5)
    assert all(r.task_ratio(5, t) == 1.0 for t in r.tasks)


def test_sweep_lambda_and_parallel_agree(task):
    values = list(np.round(np.logspace(np.log10(0.3), np.log10(3), 3), 6))
    cfg = quick_config(epochs=1)
    serial = ad.sensitivity_sweep([task], cfg, "lambda", values, values[1], seeds=[0, 1], workers=1)
    parallel = ad.sensitivity_sweep([task], cfg, "lambda", values, values[1], seeds=[0, 1], workers=2)
    assert list(serial.rows()) == list(parallel.rows())


def test_sweep_hidden_nodes_ratio_against_source_only(task):
    r = ad.sensitivity_sweep([task], quick_config(epochs=1), "hidden_nodes", [4, 8], seeds=[0], workers=1)
    for v in (4, 8):
        assert r.ratio(v, task.name, 0) == r.accuracy[(v, task.name, 0)] / r.baseline[(v, task.name, 0)]


def test_sweep_beta_axis(task):
    cfg = quick_config(epochs=1, discrepancy=DiscrepancySpec.mmd(1.0))
    r = ad.sensitivity_sweep([task], cfg, "beta", [0.3, 1.2], 1.2, seeds=[0], workers=1)
    assert r.ratio(1.2, task.name, 0) == 1.0


def test_sweep_errors(task):
    cfg = quick_config(epochs=1)
    with pytest.raises(ValueError, match="reference"):
        ad.sensitivity_sweep([task], cfg, "K", [3, 4], 5, workers=1)
    with pytest.raises(ValueError, match="beta"):
        ad.sensitivity_sweep([task], cfg, "beta", [1.0], 1.0, workers=1)
    with pytest.raises(ValueError, match="seeds"):
        ad.sensitivity_sweep([task], cfg, "K", [5], 5, seeds=[], workers=1)
    with pytest.raises(ValueError, match="axis"):
        ad.sensitivity_sweep([task], cfg, "depth", [5], 5, workers=1)


def test_hidden_nodes_config_rewires_layers():
    cfg = quick_config().with_hidden_nodes(11)
    assert cfg.layer_specs[0].out_dim == 11 and cfg.layer_specs[1].in_dim == 11


def test_threads_env(monkeypatch):
    monkeypatch.setenv(ad.THREADS_ENV, "3")
    assert ad.default_workers() == 3


def test_reverse_classifier_starts_from_forward_weights(task, monkeypatch):
    seen = []
    real = ad.fit

    def recording(source, target, config, init_state=None):
        seen.append(init_state)
        return real(source, target, config, init_state)

    monkeypatch.setattr(ad, "fit", recording)
    ad.reverse_score(task.source, task.target_unlabeled, quick_config())
    assert seen[0] is None and isinstance(seen[1], nw.NetworkState)


def test_fit_with_init_state_continues_from_it(task):
    cfg = quick_config(epochs=1)
    start = nw.init_network(cfg.layer_specs, 99)
    state, _ = ad.fit(task.source, task.target_unlabeled, replace(cfg, epochs=1), init_state=start)
    assert state.rng_seed == 99
