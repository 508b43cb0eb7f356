import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wallbench.errors import ValidationError
from wallbench.tree import TreeModel, TreeSpec, best_split, tree_fit, tree_predict


def brute_root(x, y, leaf=1):
    """Exhaustive split search by direct SSE evaluation."""
    xs = np.unique(x)
    best = None
    for a, b in zip(xs[:-1], xs[1:]):
        thr = 0.5 * (a + b)
        lm = x <= thr
        if lm.sum() < leaf or (~lm).sum() < leaf:
            continue
        sse = np.sum((y[lm] - y[lm].mean()) ** 2) + np.sum((y[~lm] - y[~lm].mean()) ** 2)
        if best is None or sse < best[1] - 1e-12 * max(1.0, abs(best[1])):
            best = (thr, sse)
    return best


def train_sse(model, X, Y):
    return float(np.sum((tree_predict(model, X) - Y) ** 2))


def test_step_example():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    Y = np.array([0.0, 0.0, 10.0, 10.0])
    m = tree_fit(TreeSpec(), X, Y)
    assert m.n_leaves == 2 and m.depth == 1
    assert 1.0 < m.threshold[0] < 2.0
    assert sorted(m.value[m.feature < 0, 0]) == [0.0, 10.0]
    assert tree_predict(m, np.array([[0.5]]))[0, 0] == 0.0


def test_memorizes_distinct_rows(rng):
    X = rng.standard_normal((150, 9))
    Y = rng.standard_normal((150, 4))
    m = tree_fit(TreeSpec(), X, Y)
    np.testing.assert_array_equal(tree_predict(m, X), Y)


def test_constant_target():
    X = np.random.default_rng(0).standard_normal((40, 3))
    m = tree_fit(TreeSpec(), X, np.full((40, 2), 3.5))
    assert m.n_nodes == 1 and m.depth == 0
    np.testing.assert_array_equal(tree_predict(m, X[:5]), np.full((5, 2), 3.5))


@pytest.mark.parametrize("seed", range(25))
def test_root_matches_brute_force(seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    n = int(rng.integers(5, 40))
    x = np.round(rng.uniform(0, 10, n), 1)  # rounding creates repeated values
    y = rng.standard_normal(n)
    got = best_split(x[:, None], y[:, None])
    want = brute_root(x, y)
    assert got[1] == pytest.approx(want[0], abs=1e-12)
    assert got[2] == pytest.approx(want[1], rel=1e-9, abs=1e-12)


def test_tie_break_lowest_feature():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    Y = np.array([[0.0], [0.0], [1.0], [1.0]])
    f, thr, _ = best_split(X, Y)
    assert (f, thr) == (0, 1.5)


def test_max_depth_and_leaf_size(rng):
    X = rng.standard_normal((200, 4))
    Y = rng.standard_normal((200, 2))
    assert tree_fit(TreeSpec(max_depth=3), X, Y).depth <= 3
    m = tree_fit(TreeSpec(min_samples_leaf=10), X, Y)
    # every leaf receives at least 10 training rows
    leaf_of = np.zeros(200, dtype=int)
    for r in range(200):
        node = 0
        while m.feature[node] >= 0:
            node = m.left[node] if X[r, m.feature[node]] <= m.threshold[node] else m.right[node]
        leaf_of[r] = node
    assert np.bincount(leaf_of)[np.unique(leaf_of)].min() >= 10


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sse_non_increasing_with_smaller_leaves(seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    X = rng.standard_normal((60, 3))
    Y = rng.standard_normal((60, 2))
    sse = [train_sse(tree_fit(TreeSpec(min_samples_leaf=k), X, Y), X, Y) for k in (16, 8, 4, 2, 1)]
    assert all(b <= a + 1e-9 for a, b in zip(sse, sse[1:]))


def test_roundtrip_arrays(rng):
    X = rng.standard_normal((50, 3))
    m = tree_fit(TreeSpec(max_depth=4), X, X[:, :2])
    m2 = TreeModel.from_saved(m.meta(), m.arrays())
    np.testing.assert_array_equal(tree_predict(m2, X), tree_predict(m, X))


def test_errors():
    with pytest.raises(ValidationError):
        tree_fit(TreeSpec(), np.zeros((0, 2)), np.zeros((0, 1)))
    with pytest.raises(ValidationError):
        TreeSpec(min_samples_leaf=0)
