"""The eight acceptance criteria, each at its stated tolerance.

Every test records a ``CRITERION n: PASS|FAIL ...`` line that is printed in
the terminal summary, then asserts.
"""
import math
import time

import numpy as np
import pytest
from scipy.linalg import expm

from koopman_uq import pipeline
from koopman_uq.dictionary import gram_matrix, monomial_dictionary
from koopman_uq.dynamics import (DynamicalSystem, SnapshotPairs, build_snapshot_pairs, builtin,
                                 flow_map, linear_system, sample_domain)
from koopman_uq.montecarlo import (empirical_moments, ensemble_simulate, kde_axes, kde_estimate,
                                   marginal_projection, moment_standard_errors,
                                   sample_uncertainty_set, silverman_bandwidth)
from koopman_uq.operator import edmd_fit
from koopman_uq.regions import Box
from koopman_uq.uncertainty import initial_moments, moments_to_coefficients

from .conftest import ACCEPTANCE_LINES, fitted

PRESETS = ("example1", "example2a", "example2b", "example3")


def record(n, checks: dict, detail: str = ""):
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}"
    if failed:
        line += f" [failed: {', '.join(failed)}]"
    if detail:
        line += f"  {detail}"
    ACCEPTANCE_LINES[n] = line
    assert ok, line


@pytest.fixture(scope="module")
def bench():
    out = {}
    for example in ("example1", "example2", "example3"):
        t0 = time.perf_counter()
        reports, passed = pipeline.benchmark(example)
        out[example] = (reports, passed, time.perf_counter() - t0)
    return out


def test_criterion_1_example1_reproduction(bench):
    (rep,), _, wall = bench["example1"]
    record(1, {"max_error<=0.05": rep["max_error"] <= 0.05, "runtime<60s": wall < 60},
           f"max_error={rep['max_error']:.4f} (bound 0.05) wall={wall:.1f}s")


def test_criterion_2_example2_reproduction(bench):
    reports, _, _ = bench["example2"]
    disc, square = reports
    checks = {"disc max_error<=0.10": disc["max_error"] <= 0.10,
              "square max_error<=0.10": square["max_error"] <= 0.10,
              "moment flip": disc["checks"]["moment_flip"]}
    ch = disc["pure_moment_change"]["estimated"]
    record(2, checks,
           f"disc={disc['max_error']:.4f} square={square['max_error']:.4f} "
           f"disc pure-x1 change={np.round(ch['x1'], 4).tolist()} "
           f"(MC reference flip holds: {disc['moment_flip_mc']})")


def test_criterion_3_example3_reachability(bench):
    (rep,), _, _ = bench["example3"]
    superset = all(r["ok"] for r in rep["superset"])
    est = rep["trends"]["estimated"]
    true = rep["trends"]["true"]
    checks = {"superset": superset}
    for name in ("theta_decreasing", "x_increasing", "y_increasing", "y_wider_than_x_at_end"):
        checks[f"estimated {name}"] = est[name]
    w = est["widths"]
    record(3, checks,
           f"estimated widths x={np.round(w['x'], 2).tolist()} y={np.round(w['y'], 2).tolist()} "
           f"theta={np.round(w['theta'], 2).tolist()}; MC-support trends hold: "
           f"{all(v for k, v in true.items() if k != 'widths')}")


def test_criterion_4_speedup(bench):
    reps = [r for ex in ("example1", "example2", "example3") for r in bench[ex][0]]
    checks = {r["example"]: r["speedup"] >= 10 for r in reps}
    record(4, checks, " ".join(f"{r['example']}={r['speedup']:.0f}x" for r in reps))


def _identity_model():
    d = monomial_dictionary(2, 2, 3.0)
    dom = Box([-3, -3], [3, 3])
    X = sample_domain(dom, 500, 4).T
    return edmd_fit(SnapshotPairs(X, X.copy(), 0.2), d, gram_matrix(d, dom))


A_LIN = np.array([[0.0, 1.0], [-1.5, -1.0]])


def _linear_model():
    dom = Box([-3, -3], [3, 3])
    d = monomial_dictionary(2, 1, 3.0)
    pairs = build_snapshot_pairs(linear_system(A_LIN, dom), sample_domain(dom, 10_000, 11), 0.2, 0.2)
    return edmd_fit(pairs, d, gram_matrix(d, dom))


def test_criterion_5_duality():
    models = {p: fitted(p)[1] for p in ("example1", "example2a", "example3")}
    models["identity"] = _identity_model()
    models["linear"] = _linear_model()
    checks, worst = {}, 0.0
    for name, m in models.items():
        res = m.duality_residual()
        ek = np.sort_complex(np.linalg.eigvals(m.K))
        ep = np.sort_complex(np.linalg.eigvals(m.P))
        spec = float(np.abs(ek - ep).max())
        lam = m.gram.regularized
        r = np.random.default_rng(0)
        adj = 0.0
        for _ in range(100):
            a, b = r.standard_normal((2, m.size))
            lhs, rhs = (m.K @ b) @ lam @ a, b @ lam @ (m.P @ a)
            adj = max(adj, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))
        checks[f"{name} residual"] = res <= 1e-9
        checks[f"{name} spectra"] = spec <= 1e-8
        checks[f"{name} adjoint"] = adj <= 1e-8
        worst = max(worst, res)
    record(5, checks, f"worst duality residual {worst:.1e}")


def test_criterion_6_linear_oracle():
    m = _linear_model()
    err = float(np.abs(m.K.T[1:, 1:] - expm(0.2 * A_LIN)).max())
    record(6, {"|K^T block - expm| <= 1e-6": err <= 1e-6}, f"max entry error {err:.1e}")


def test_criterion_7_conservation_consistency():
    checks = {}
    ident = _identity_model()
    checks["identity K=I"] = float(np.abs(ident.K - np.eye(ident.size)).max()) <= 1e-10
    e0_err = {}
    for p in ("example1", "example2a"):
        m = fitted(p)[1]
        e0 = np.eye(m.size)[0]
        e0_err[p] = float(np.linalg.norm(m.K @ e0 - e0))
        checks[f"{p} Ke0"] = e0_err[p] <= 0.05
    for p in PRESETS:
        cfg, m, _ = fitted(p)
        mom = initial_moments(cfg.region(), m.dictionary).m
        w = moments_to_coefficients(m.gram, mom)
        rt = np.linalg.norm(m.gram.regularized @ w - mom) / np.linalg.norm(mom)
        lhs = moments_to_coefficients(m.gram, m.K.T @ mom)
        sq = np.linalg.norm(lhs - m.P @ w) / max(np.linalg.norm(m.P @ w), 1.0)
        checks[f"{p} round trip"] = rt <= 1e-8
        checks[f"{p} commuting square"] = sq <= 1e-8
    record(7, checks, " ".join(f"||Ke0-e0||[{k}]={v:.4f}" for k, v in e0_err.items()))


def test_criterion_8_statistical_oracles():
    checks = {}
    for p in PRESETS:
        cfg, m, _ = fitted(p)
        pts = sample_uncertainty_set(cfg.region(), cfg.mc.n_samples, cfg.mc.seed)
        emp = empirical_moments(pts, m.dictionary).m
        se = moment_standard_errors(pts, m.dictionary)
        quad = initial_moments(cfg.region(), m.dictionary).m
        z = np.abs(emp - quad)[se > 0] / se[se > 0]
        checks[f"{p} moments within 3 SE"] = bool(np.all(z <= 3))
    masses = []
    for p in ("example1", "example2a", "example2b"):
        cfg, _, _ = fitted(p)
        pts = sample_uncertainty_set(cfg.region(), cfg.mc.n_samples, cfg.mc.seed)
        ens = ensemble_simulate(builtin(cfg.system), pts, cfg.data.dt,
                                cfg.propagation.steps * cfg.data.dt)
        for snap in ens.snapshots[::5]:
            h = [silverman_bandwidth(snap, a) for a in range(snap.shape[1])]
            masses.append(kde_estimate(snap, h, kde_axes(snap, h)).integral())
    cfg, _, _ = fitted("example3")
    pts = sample_uncertainty_set(cfg.region(), cfg.mc.n_samples, cfg.mc.seed)
    ens = ensemble_simulate(builtin(cfg.system), pts, 0.2, 4.0)
    for snap in ens.snapshots[::5]:
        masses += [marginal_projection(snap, a).integral() for a in range(3)]
    checks["KDE mass in [0.98, 1.02]"] = all(0.98 <= v <= 1.02 for v in masses)
    decay = DynamicalSystem("decay", 1, lambda x: -x, Box([-2], [2]))
    errs = [abs(flow_map(decay, [1.0], 1.0, s)[0] - math.exp(-1.0)) for s in (4, 8, 16, 32)]
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    checks["RK4 order in [3.8, 4.2]"] = all(3.8 <= q <= 4.2 for q in orders)
    record(8, checks, f"KDE mass range [{min(masses):.4f}, {max(masses):.4f}] "
                      f"RK4 orders {np.round(orders, 3).tolist()}")
