import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from moment_match.samples import (
    Bounds,
    DataFormatError,
    LabeledSample,
    Sample,
    load_dense_csv,
    load_sparse_bow,
    make_synthetic_pair,
    resample_source_balanced,
    write_sparse_bow,
)


def test_bounds_require_lo_below_hi():
    with pytest.raises(ValueError):
        Bounds(1.0, 1.0)
    with pytest.raises(ValueError):
        Bounds(2.0, 1.0)
    assert Bounds(-1, 1).span == 2.0


def test_sample_rejects_out_of_range_instead_of_clamping():
    with pytest.raises(ValueError, match="outside bounds"):
        Sample([[0.0], [1.0000001]], Bounds(0, 1))
    s = Sample([[0.0], [1.0]], Bounds(0, 1))
    assert (s.n, s.N) == (2, 1)


def test_sample_is_read_only():
    s = Sample(np.full((2, 2), 0.5), Bounds(0, 1))
    with pytest.raises(ValueError):
        s.data[0, 0] = 0.1


@settings(max_examples=60, deadline=None)
@given(
    data=arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 4)),
                elements=st.floats(-5, 5)),
    lo=st.floats(-3, 0),
    width=st.floats(0.1, 4),
)
def test_sample_construction_accepts_exactly_in_bounds(data, lo, width):
    b = Bounds(lo, lo + width)
    inside = bool(np.all((data >= b.lo) & (data <= b.hi)))
    if inside:
        assert Sample(data, b).n == data.shape[0]
    else:
        with pytest.raises(ValueError):
            Sample(data, b)


def test_labeled_sample_requires_one_hot_rows():
    with pytest.raises(ValueError):
        LabeledSample(np.zeros((2, 1)), [[1, 1], [0, 1]])
    with pytest.raises(ValueError):
        LabeledSample(np.zeros((3, 1)), [[1, 0], [0, 1]])


# ---- dense csv ------------------------------------------------------------- #

def test_dense_csv_with_labels(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("x0,x1,y\n0.1,0.2,1\n0.3,0.4,0\n0.5,0.6,1\n")
    s = load_dense_csv(f, label_column="y")
    assert (s.n, s.input_dim, s.n_classes) == (3, 2, 2)
    np.testing.assert_array_equal(s.class_ids, [1, 0, 1])
    np.testing.assert_array_equal(s.inputs[2], [0.5, 0.6])


def test_dense_csv_sorts_sparse_class_ids(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("x,label\n1,7\n2,3\n3,7\n")
    s = load_dense_csv(f, label_column="label")
    np.testing.assert_array_equal(s.class_ids, [1, 0, 1])


def test_dense_csv_single_column_without_header(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("0.5\n0.25\n")
    m = load_dense_csv(f)
    assert m.shape == (2, 1)


def test_dense_csv_with_bounds_returns_sample(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("a,b\n0,1\n1,0\n")
    s = load_dense_csv(f, bounds=Bounds(0, 1))
    assert isinstance(s, Sample) and s.N == 2


@pytest.mark.parametrize(
    "text, match",
    [
        ("a,b,c\n1,2,3\n1,2\n", "row 3"),
        ("1,2\n1,x\n", "non-numeric"),
        ("", "empty"),
    ],
)
def test_dense_csv_errors(tmp_path, text, match):
    f = tmp_path / "d.csv"
    f.write_text(text)
    with pytest.raises(DataFormatError, match=match):
        load_dense_csv(f)


def test_dense_csv_unknown_label_column(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("a,b\n1,0\n")
    with pytest.raises(DataFormatError, match="unknown label column"):
        load_dense_csv(f, label_column="y")


# ---- sparse bag of words --------------------------------------------------- #

def test_sparse_line_parse(tmp_path):
    f = tmp_path / "s.txt"
    f.write_text("1 0:2 4:1\n0\n")
    s = load_sparse_bow(f, dim=5)
    np.testing.assert_array_equal(s.inputs, [[2, 0, 0, 0, 1], [0, 0, 0, 0, 0]])
    np.testing.assert_array_equal(s.class_ids, [1, 0])


def test_sparse_one_based(tmp_path):
    f = tmp_path / "s.txt"
    f.write_text("0 1:3 5:1\n")
    s = load_sparse_bow(f, dim=5, one_based=True)
    np.testing.assert_array_equal(s.inputs, [[3, 0, 0, 0, 1]])


@pytest.mark.parametrize(
    "line, match",
    [("1 7:1", "out of range"), ("1 2:1 2:3", "duplicate"), ("1 2-1", "malformed"), ("1 a:1", "malformed")],
)
def test_sparse_errors(tmp_path, line, match):
    f = tmp_path / "s.txt"
    f.write_text(line + "\n")
    with pytest.raises(DataFormatError, match=match):
        load_sparse_bow(f, dim=5)


@settings(max_examples=40, deadline=None)
@given(
    rows=st.lists(
        st.tuples(
            st.integers(0, 1),
            st.dictionaries(st.integers(0, 11), st.floats(-1e6, 1e6).filter(lambda v: v != 0), max_size=6),
        ),
        min_size=1,
        max_size=8,
    ),
    one_based=st.booleans(),
)
def test_sparse_round_trip(tmp_path_factory, rows, one_based):
    x = np.zeros((len(rows), 12))
    for i, (_, feats) in enumerate(rows):
        for j, v in feats.items():
            x[i, j] = v
    s = LabeledSample.from_ids(x, [r[0] for r in rows], 2)
    path = tmp_path_factory.mktemp("bow") / "s.txt"
    write_sparse_bow(s, path, one_based=one_based)
    assert load_sparse_bow(path, 12, one_based=one_based) == s


# ---- synthetic pairs ------------------------------------------------------- #

def test_synthetic_pair_is_deterministic():
    a = make_synthetic_pair("shift", 0.8, 50, 40, 30, seed=7)
    b = make_synthetic_pair("shift", 0.8, 50, 40, 30, seed=7)
    assert a == b
    assert a.source.n == 50 and a.target_unlabeled.shape == (40, 2) and a.target_test.n == 30


def test_synthetic_pair_zero_magnitude_same_process():
    d = make_synthetic_pair("shift", 0.0, 4000, 4000, 10, seed=1)
    np.testing.assert_allclose(d.source.inputs.mean(axis=0), d.target_unlabeled.mean(axis=0), atol=0.06)
    assert not np.array_equal(d.source.inputs, d.target_unlabeled)


def test_rotation_by_pi_swaps_clusters():
    d = make_synthetic_pair("rotation", np.pi, 10, 10, 4000, seed=3)
    t = d.target_test
    c0 = t.inputs[t.class_ids == 0].mean(axis=0)
    c1 = t.inputs[t.class_ids == 1].mean(axis=0)
    np.testing.assert_allclose(c0, [1.0, 0.0], atol=0.05)
    np.testing.assert_allclose(c1, [-1.0, 0.0], atol=0.05)


def test_shift_moves_both_coordinates():
    d = make_synthetic_pair("shift", 2.0, 10, 10, 4000, seed=3)
    np.testing.assert_allclose(d.target_test.inputs.mean(axis=0), [2.0, 2.0], atol=0.06)


def test_synthetic_pair_rejects_bad_args():
    with pytest.raises(ValueError):
        make_synthetic_pair("shear", 1.0)
    with pytest.raises(ValueError):
        make_synthetic_pair("shift", -1.0)
    with pytest.raises(ValueError):
        make_synthetic_pair("shift", 1.0, n_source=0)


# ---- balanced resampling --------------------------------------------------- #

def _imbalanced():
    return LabeledSample.from_ids(np.arange(12.0)[:, None], [0] * 10 + [1] * 2, 2)


def test_resample_balances_down_and_up():
    out = resample_source_balanced(_imbalanced(), 8, seed=0)
    np.testing.assert_array_equal(np.bincount(out.class_ids), [4, 4])
    minority = out.inputs[out.class_ids == 1].ravel()
    assert set(minority) <= {10.0, 11.0}
    majority = out.inputs[out.class_ids == 0].ravel()
    assert len(set(majority)) == 4  # drawn without replacement


def test_resample_odd_size_differs_by_one():
    out = resample_source_balanced(_imbalanced(), 9, seed=5)
    assert sorted(np.bincount(out.class_ids)) == [4, 5]


def test_resample_balanced_input_keeps_counts():
    s = LabeledSample.from_ids(np.arange(6.0)[:, None], [0, 1, 0, 1, 0, 1], 2)
    out = resample_source_balanced(s, 6, seed=2)
    np.testing.assert_array_equal(np.bincount(out.class_ids), [3, 3])


def test_resample_missing_class():
    s = LabeledSample.from_ids(np.zeros((3, 1)), [0, 0, 0], 2)
    with pytest.raises(ValueError, match="absent"):
        resample_source_balanced(s, 4, seed=0)


def test_resample_is_deterministic():
    a = resample_source_balanced(_imbalanced(), 7, seed=11)
    b = resample_source_balanced(_imbalanced(), 7, seed=11)
    assert a == b


@settings(max_examples=60, deadline=None)
@given(
    counts=st.lists(st.integers(1, 15), min_size=2, max_size=5),
    extra=st.integers(0, 40),
    seed=st.integers(0, 2**31),
)
def test_resample_histogram_balanced(counts, extra, seed):
    ids = np.repeat(np.arange(len(counts)), counts)
    s = LabeledSample.from_ids(np.arange(ids.size, dtype=float)[:, None], ids, len(counts))
    size = len(counts) + extra
    out = resample_source_balanced(s, size, seed)
    hist = np.bincount(out.class_ids, minlength=len(counts))
    assert hist.sum() == size
    assert hist.max() - hist.min() <= 1
