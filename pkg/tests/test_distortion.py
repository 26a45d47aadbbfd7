import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from conftest import make_ds
from oracles import brute_force_transport

from statdistort.distortion import (
    BinningSpec,
    Histogram,
    build_histogram,
    cost_matrix,
    emd,
    emd_1d_cdf,
    emd_1d_oracle,
    emd_flow,
    ground_distance,
    statistical_distortion,
    transport,
    write_histogram_csv,
)


def unit_emd(p, q):
    """EMD of two dense 1-D mass vectors with unit center spacing."""
    P, Q = Histogram.from_masses(p), Histogram.from_masses(q)
    return emd(P, Q) * len(p)


# -- histograms -------------------------------------------------------------


def test_identical_points_single_bin():
    spec = BinningSpec([0.0], [1.0], [8])
    h = build_histogram(np.full((4, 1), 0.3), spec)
    assert h.mass.tolist() == [1.0]


def test_two_points_two_bins():
    spec = BinningSpec([0.0], [1.0], [2])
    h = build_histogram(np.array([[0.1], [0.9]]), spec)
    assert h.dense().tolist() == [0.5, 0.5]


def test_max_edge_goes_to_last_bin():
    spec = BinningSpec([0.0], [1.0], [4])
    h = build_histogram(np.array([[1.0], [0.5]]), spec)
    assert h.dense().tolist() == [0.0, 0.0, 0.5, 0.5]


def test_empty_points_error():
    with pytest.raises(ValueError, match="no complete observations"):
        build_histogram(np.zeros((0, 2)), BinningSpec([0, 0], [1, 1], [2, 2]))


def test_degenerate_dimension_single_bin():
    spec = BinningSpec.from_points(np.array([[1.0, 5.0], [2.0, 5.0]]), bins=8)
    assert spec.counts.tolist() == [8, 1]
    h = build_histogram(np.array([[1.0, 5.0], [2.0, 5.0]]), spec)
    assert np.isclose(h.mass.sum(), 1.0, atol=1e-12)
    assert np.all((h.centers >= spec.mins) & (h.centers <= spec.maxs))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(2, 10))
def test_binning_kernels_agree(seed, d, bins):
    from statdistort.distortion import bin_flat_index

    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(200, d))
    pts[0] = pts.max(axis=0)
    spec = BinningSpec.from_points(pts, bins=bins)
    a = bin_flat_index(pts, spec, use_numba=True)
    b = bin_flat_index(pts, spec, use_numba=False)
    assert np.array_equal(a, b)


# -- ground distance ----------------------------------------------------------


def test_ground_distance_examples():
    spec1 = BinningSpec([0.0], [1.0], [8])
    assert ground_distance([0.3], [0.3], spec1) == 0.0
    assert ground_distance([0.0625], [0.1875], spec1) == pytest.approx(0.125, abs=1e-15)
    spec2 = BinningSpec([0.0, 0.0], [1.0, 1.0], [8, 8])
    assert ground_distance([0.1, 0.1], [0.4, 0.5], spec2) == pytest.approx(0.5, abs=1e-15)


def test_cost_matrix_matches_ground_distance():
    spec = BinningSpec([0.0, -2.0], [3.0, 6.0], [4, 5])
    ia = np.array([[0, 0], [3, 4], [1, 2]])
    ib = np.array([[2, 1], [0, 4]])
    C = cost_matrix(spec, ia, ib)
    ha = Histogram(spec, ia, np.full(3, 1 / 3))
    hb = Histogram(spec, ib, np.full(2, 0.5))
    for r, ca in enumerate(ha.centers):
        for c, cb in enumerate(hb.centers):
            assert C[r, c] == pytest.approx(ground_distance(ca, cb, spec), abs=1e-14)


# -- emd --------------------------------------------------------------------


def test_emd_examples():
    assert unit_emd([0.2, 0.3, 0.5], [0.2, 0.3, 0.5]) == 0.0
    assert unit_emd([1, 0, 0, 0], [0, 0, 0, 1]) == pytest.approx(3.0, abs=1e-12)
    assert unit_emd([0.5, 0.5, 0], [0, 0.5, 0.5]) == pytest.approx(1.0, abs=1e-12)


def test_oracle_examples():
    assert emd_1d_cdf([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert emd_1d_cdf([1, 0, 0, 0], [0, 0, 0, 1], spacing=0.25) == pytest.approx(0.75)
    assert emd_1d_cdf([0.25, 0.75], [0.75, 0.25]) == pytest.approx(0.5)


def test_oracle_rejects_multidimensional():
    spec = BinningSpec([0, 0], [1, 1], [2, 2])
    h = build_histogram(np.array([[0.1, 0.1]]), spec)
    with pytest.raises(ValueError):
        emd_1d_oracle(h, h)


def test_mismatched_specs_rejected():
    P = Histogram.from_masses([0.5, 0.5])
    Q = Histogram.from_masses([0.2, 0.3, 0.5])
    with pytest.raises(ValueError, match="different binning"):
        emd(P, Q)


def random_pair(rng, bins):
    p = rng.random(bins) * (rng.random(bins) < 0.7)
    q = rng.random(bins) * (rng.random(bins) < 0.7)
    p[rng.integers(bins)] += 0.1
    q[rng.integers(bins)] += 0.1
    return p / p.sum(), q / q.sum()


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 32))
def test_general_solver_matches_1d_oracle(seed, bins):
    p, q = random_pair(np.random.default_rng(seed), bins)
    P, Q = Histogram.from_masses(p), Histogram.from_masses(q)
    assert abs(emd(P, Q) - emd_1d_oracle(P, Q)) <= 1e-9


def random_nd(rng, spec, k):
    flat = rng.choice(int(np.prod(spec.counts)), size=k, replace=False)
    idx = np.stack(np.unravel_index(flat, spec.counts), axis=1)
    m = rng.random(k) + 0.05
    order = np.argsort(flat)
    return Histogram(spec, idx[order], (m / m.sum())[order])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_metric_properties(seed):
    rng = np.random.default_rng(seed)
    spec = BinningSpec([0, 0, 0], [1, 1, 1], [4, 4, 4])
    P, Q, R = (random_nd(rng, spec, rng.integers(1, 12)) for _ in range(3))
    assert emd(P, P) == 0.0
    assert abs(emd(P, Q) - emd(Q, P)) <= 1e-9
    assert emd(P, R) <= emd(P, Q) + emd(Q, R) + 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_flow_feasible(seed):
    rng = np.random.default_rng(seed)
    spec = BinningSpec([0, 0], [1, 1], [6, 6])
    P, Q = random_nd(rng, spec, rng.integers(1, 20)), random_nd(rng, spec, rng.integers(1, 20))
    sol, _, _ = emd_flow(P, Q)
    assert np.all(sol.flows >= -1e-15)
    np.testing.assert_allclose(sol.flows.sum(axis=1), P.mass, atol=1e-9)
    np.testing.assert_allclose(sol.flows.sum(axis=0), Q.mass, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 6))
def test_small_instances_match_brute_force(seed, kp, kq):
    rng = np.random.default_rng(seed)
    spec = BinningSpec([0, 0], [1, 1], [5, 5])
    N = 12
    hp = random_nd(rng, spec, kp)
    hq = random_nd(rng, spec, kq)
    cp = rng.multinomial(N - kp, np.full(kp, 1 / kp)) + 1
    cq = rng.multinomial(N - kq, np.full(kq, 1 / kq)) + 1
    P = Histogram(spec, hp.index, cp / N)
    Q = Histogram(spec, hq.index, cq / N)
    ref = brute_force_transport(cp, cq, cost_matrix(spec, P.index, Q.index)) / N
    assert abs(emd(P, Q) - ref) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 25), st.integers(1, 25))
def test_transport_matches_linprog(seed, m, n):
    rng = np.random.default_rng(seed)
    a = rng.random(m)
    b = rng.random(n)
    a /= a.sum()
    b /= b.sum()
    C = rng.random((m, n))
    sol = transport(a, b, C)
    A_eq = np.vstack([np.kron(np.eye(m), np.ones(n)), np.kron(np.ones(m), np.eye(n))])
    ref = linprog(C.ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    assert sol.objective == pytest.approx(ref.fun, abs=1e-9)


def test_transport_rejects_unbalanced():
    with pytest.raises(ValueError, match="totals differ"):
        transport([0.5, 0.5], [0.7, 0.2], np.ones((2, 2)))


def test_transport_degenerate_instance():
    # equal row and column masses: many zero-flow basic cells
    a = np.full(10, 0.1)
    C = np.abs(np.subtract.outer(np.arange(10), np.arange(10))).astype(float)
    sol = transport(a, a, C)
    assert sol.objective == pytest.approx(0.0, abs=1e-12)


# -- dataset level ----------------------------------------------------------


def test_distortion_identity(reference):
    assert statistical_distortion(reference, reference) == 0.0


def test_distortion_shift_two_bin_widths():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(4000, 1))
    R0 = x.max() - x.min()
    # with the pooled support growing by c, c = 2 * (R0 + c) / 8 gives a
    # shift of exactly two bin widths
    c = R0 / 3
    dirty = make_ds(x, names=("a",))
    treated = make_ds(x + c, names=("a",))
    d = statistical_distortion(dirty, treated)
    assert d == pytest.approx(2 / 8, abs=1 / 8)
    spec = BinningSpec.from_points(x, x + c)
    P, Q = build_histogram(x, spec), build_histogram(x + c, spec)
    assert d == pytest.approx(emd_1d_oracle(P, Q), abs=1e-9)


def test_winsorized_heavy_tail_positive():
    rng = np.random.default_rng(2)
    x = rng.standard_t(2, size=(2000, 1))
    lo, hi = np.quantile(x, [0.01, 0.99])
    d = statistical_distortion(make_ds(x, names=("a",)), make_ds(np.clip(x, lo, hi), names=("a",)))
    assert d > 0


def test_distortion_skips_incomplete_rows():
    a = make_ds([[1.0, 2.0, 0.5], [float("nan"), 100.0, 0.5]])
    b = make_ds([[1.0, 2.0, 0.5]])
    assert statistical_distortion(a, b) == 0.0


def test_distortion_errors():
    a = make_ds([[float("nan"), 1.0, 0.5]])
    with pytest.raises(ValueError, match="no complete observations"):
        statistical_distortion(a, a)
    with pytest.raises(ValueError, match="attribute count"):
        statistical_distortion(make_ds([[1.0]], names=("a",)), make_ds([[1.0, 2.0, 3.0]]))


def test_per_attribute_mode_sums_marginals():
    rng = np.random.default_rng(1)
    x = rng.random((300, 3))
    y = x + [0.0, 0.3, 0.0]
    a, b = make_ds(x), make_ds(y)
    total = 0.0
    for c in range(3):
        spec = BinningSpec.from_points(x[:, c], y[:, c])
        total += emd(build_histogram(x[:, c], spec), build_histogram(y[:, c], spec))
    assert statistical_distortion(a, b, mode="per-attribute") == pytest.approx(total, abs=1e-12)


def test_duplicating_points_leaves_emd_unchanged():
    rng = np.random.default_rng(3)
    x, y = rng.random((200, 3)), rng.random((150, 3)) ** 2
    d1 = statistical_distortion(make_ds(x), make_ds(y))
    d2 = statistical_distortion(make_ds(np.vstack([x, x])), make_ds(np.vstack([y, y])))
    assert d1 == pytest.approx(d2, abs=1e-12)


def test_histogram_csv(tmp_path):
    spec = BinningSpec([0.0], [1.0], [2])
    h = build_histogram(np.array([[0.1], [0.9], [0.8]]), spec)
    p = tmp_path / "h.csv"
    write_histogram_csv(h, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "center1,mass"
    assert lines[1:] == ["0.25,0.3333333333333333", "0.75,0.6666666666666666"]
