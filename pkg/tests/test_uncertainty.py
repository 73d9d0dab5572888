import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from koopman_uq.dictionary import GramMatrix, gram_matrix, monomial_dictionary
from koopman_uq.dynamics import SnapshotPairs, sample_domain
from koopman_uq.operator import edmd_fit
from koopman_uq.errors import EmptySupport, InvalidRegion, UnsupportedDictionary
from koopman_uq.regions import Ball, Box, Cylinder, region_from_dict
from koopman_uq.uncertainty import (DensityField, estimate_support, grid_axes, initial_moments,
                                    moments_to_coefficients, propagate_moments, reach_marginals,
                                    reconstruct_density, write_marginals_csv, write_moments_csv,
                                    write_support_json)

from .conftest import fitted

EX1_BOX = Box([-1.5, 0.4], [-1.1, 0.8])


def test_box_moments_analytic():
    m = initial_moments(EX1_BOX, monomial_dictionary(2, 2, 3.0)).m
    assert m[0] == pytest.approx(1.0, abs=1e-14)
    assert m[1] == pytest.approx(-1.3 / 3, abs=1e-12)
    assert m[4] == pytest.approx(-1.3 * 0.6 / 9, abs=1e-12)
    assert m[1] == pytest.approx(-0.43333, abs=1e-5)
    assert m[4] == pytest.approx(-0.08667, abs=1e-5)


def test_disc_and_cylinder_moments_analytic():
    d = monomial_dictionary(2, 2, 1.0)
    m = initial_moments(Ball([0.4, 0.8], 0.2), d).m
    # E[x^2] over a disc = c^2 + r^2 / 4
    assert m[3] == pytest.approx(0.4 ** 2 + 0.01, abs=1e-12)
    assert m[4] == pytest.approx(0.32, abs=1e-12)
    d3 = monomial_dictionary(3, 2, 1.0)
    cyl = Cylinder([0, 0], 1.0, [0, 1], 2, -1, 1)
    m3 = initial_moments(cyl, d3).m
    idx = d3.exponents.index((2, 0, 0))
    assert m3[0] == pytest.approx(1.0, abs=1e-13)
    assert m3[idx] == pytest.approx(0.25, abs=1e-12)
    assert m3[d3.exponents.index((0, 0, 2))] == pytest.approx(1 / 3, abs=1e-12)


def test_region_membership_matches_volume():
    cyl = Cylinder([0, 0], 1.0, [0, 1], 2, -1, 1)
    lo, hi = cyl.bounds()
    n = 200_000
    pts = Box(lo, hi).sample(n, 2)
    frac = cyl.contains(pts).mean()
    ratio = cyl.volume / Box(lo, hi).volume
    assert abs(frac - ratio) <= 3 * np.sqrt(ratio * (1 - ratio) / n)


def test_region_validation():
    with pytest.raises(InvalidRegion):
        Cylinder([0, 0], 1.0, [0, 2], 2, -1, 1)
    with pytest.raises(InvalidRegion):
        Ball([0, 0], 0.0)
    with pytest.raises(InvalidRegion):
        region_from_dict({"shape": "torus"})


def test_identity_propagation():
    d = monomial_dictionary(2, 2, 3.0)
    dom = Box([-3, -3], [3, 3])
    X = sample_domain(dom, 200, 1).T
    model = edmd_fit(SnapshotPairs(X, X.copy(), 0.2), d, gram_matrix(d, dom))
    m0 = initial_moments(EX1_BOX, d)
    traj = propagate_moments(model, m0, 10)
    assert len(traj) == 11 and traj[-1].t == pytest.approx(2.0)
    assert all(np.allclose(mv.m, m0.m, atol=1e-10) for mv in traj)


def test_example1_constant_moment_stays_near_one(ex1):
    cfg, model, _ = ex1
    traj = propagate_moments(model, initial_moments(cfg.region(), model.dictionary), 50)
    assert len(traj) == 51
    assert max(abs(mv.m[0] - 1) for mv in traj) <= 0.05


def test_coefficients_trivial_and_round_trip(ex2):
    g = GramMatrix(2 * np.eye(4), "given", 0, Box([0] * 4, [1] * 4), reg_factor=0.0)
    assert np.allclose(moments_to_coefficients(g, [1, 0, 0, 0]), [0.5, 0, 0, 0])
    for preset in ("example1", "example2a", "example3"):
        cfg, model, _ = fitted(preset)
        m = initial_moments(cfg.region(), model.dictionary).m
        w = moments_to_coefficients(model.gram, m)
        assert np.linalg.norm(model.gram.regularized @ w - m) <= 1e-8 * np.linalg.norm(m)
        lhs = moments_to_coefficients(model.gram, model.K.T @ m)
        rhs = model.P @ w
        assert np.linalg.norm(lhs - rhs) <= 1e-8 * max(np.linalg.norm(rhs), 1.0)


def test_reconstruct_trivial():
    d = monomial_dictionary(2, 3, 3.0)
    axes = grid_axes(Box([0, 0], [2.5, 2.5]), 20)
    e0 = np.eye(d.K)[0]
    assert np.allclose(reconstruct_density(d, e0, axes).values, 1.0)
    assert not np.any(reconstruct_density(d, np.zeros(d.K), axes).values)


def test_support_trivial_cases():
    ax = (np.linspace(0, 1, 11),)
    full = estimate_support(DensityField(ax, np.ones(11)))
    assert full.intervals == ((0.0, 1.0),)
    v = np.zeros(11)
    v[4] = 2.0
    one = estimate_support(DensityField(ax, v))
    assert one.intervals == ((0.4, 0.4),) and one.mask.sum() == 1
    with pytest.raises(EmptySupport):
        estimate_support(DensityField(ax, -np.ones(11)))


def test_density_field_validation():
    with pytest.raises(ValueError):
        DensityField((np.array([0.0, 1.0]),), np.ones(3))
    with pytest.raises(ValueError):
        DensityField((np.array([1.0, 0.0]),), np.ones(2))


def test_example3_initial_marginals(ex3):
    cfg, model, _ = ex3
    m0 = initial_moments(cfg.region(), model.dictionary)
    margs = reach_marginals(model, m0, [0.0])
    assert len(margs) == 3
    x, y, th = margs
    for mg in (x, y):
        assert mg.support.contains_interval(0, -1.0, 1.0)
    # heading: close to the uniform density 1/2 on (-1, 1) and covering it
    nodes, vals = th.field.axes[0], th.field.values
    uniform = np.where(np.abs(nodes) <= 1, 0.5, 0.0)
    assert np.trapezoid(np.abs(vals - uniform), nodes) < 0.15
    assert th.support.contains_interval(0, -1.0, 1.0)
    assert th.field.integral() == pytest.approx(1.0, abs=1e-12)


def test_reach_requires_separable_dictionary(ex1):
    cfg, model, _ = ex1
    with pytest.raises(UnsupportedDictionary):
        reach_marginals(model, initial_moments(cfg.region(), model.dictionary), [0.0])


def test_writers(ex3, tmp_path):
    cfg, model, _ = ex3
    m0 = initial_moments(cfg.region(), model.dictionary)
    traj = propagate_moments(model, m0, 2)
    write_moments_csv(tmp_path / "m.csv", traj)
    rows = list(csv.reader(open(tmp_path / "m.csv")))
    assert rows[0] == ["t"] + [f"m{k}" for k in range(1, 37)] and len(rows) == 4
    assert np.array_equal(np.array(rows[1][1:], dtype=float), m0.m)
    margs = reach_marginals(model, m0, [0.0, 0.4], grid_nodes=50)
    write_marginals_csv(tmp_path / "g.csv", margs)
    rows = list(csv.reader(open(tmp_path / "g.csv")))
    assert rows[0] == ["axis", "t", "node", "value_raw", "value_clipped_normalized"]
    assert len(rows) == 1 + 6 * 50
    write_support_json(tmp_path / "s.json", margs)
    rec = json.loads((tmp_path / "s.json").read_text())
    assert set(rec[0]) == {"t", "axis", "lo", "hi", "threshold"} and len(rec) == 6


@settings(max_examples=30, deadline=None)
@given(st.floats(-2.5, 2.0), st.floats(-2.5, 2.0), st.floats(0.05, 0.5), st.floats(0.05, 0.5))
def test_box_mean_moments(a, b, wa, wb):
    box = Box([a, b], [a + wa, b + wb])
    m = initial_moments(box, monomial_dictionary(2, 2, 3.0)).m
    assert m[1] == pytest.approx((a + wa / 2) / 3, abs=1e-12)
    assert m[2] == pytest.approx((b + wb / 2) / 3, abs=1e-12)
    assert m[4] == pytest.approx((a + wa / 2) * (b + wb / 2) / 9, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=6, max_size=6), st.floats(-3, 3))
def test_propagation_is_linear(v, c):
    _, model, _ = fitted("example1")
    v = np.array(v)
    a = propagate_moments(model, v, 3)[-1].m
    b = propagate_moments(model, c * v, 3)[-1].m
    assert np.allclose(b, c * a, atol=1e-12)


@pytest.mark.parametrize("preset", ["example1", "example2a", "example2b"])
def test_constant_moment_within_residual_band(preset):
    cfg, model, _ = fitted(preset)
    traj = propagate_moments(model, initial_moments(cfg.region(), model.dictionary),
                             cfg.propagation.steps)
    band = 10 * model.meta["residual_p90"]
    assert max(abs(mv.m[0] - 1) for mv in traj) <= band


@pytest.mark.parametrize("preset", ["example1", "example2a", "example2b", "example3"])
def test_quadrature_moments_vs_million_samples(preset):
    cfg, model, _ = fitted(preset)
    d, region = model.dictionary, cfg.region()
    n, chunk = 1_000_000, 100_000
    r = np.random.default_rng(2024)
    s1 = np.zeros(d.K)
    s2 = np.zeros(d.K)
    for _ in range(n // chunk):
        psi = d(region.sample(chunk, r))
        s1 += psi.sum(axis=0)
        s2 += (psi ** 2).sum(axis=0)
    mean = s1 / n
    se = np.sqrt(np.maximum(s2 / n - mean ** 2, 0.0) / n)
    quad = initial_moments(region, d).m
    assert np.all(np.abs(mean - quad) <= 3 * se + 1e-13)
