"""End-to-end experiment runs shared by the CLI, scripts and acceptance tests."""
from __future__ import annotations

from dataclasses import dataclass, field
import json
import logging
from pathlib import Path

import numpy as np

from . import montecarlo as mc
from .config import ExperimentConfig, load_config
from .dictionary import gram_matrix
from .dynamics import SnapshotPairs, build_snapshot_pairs, builtin, sample_domain
from .errors import DictionaryMismatch
from .operator import OperatorModel, edmd_fit
from .uncertainty import (Marginal, estimate_support, initial_moments, reach_marginals,
                          support_records, write_marginals_csv, write_moments_csv,
                          write_support_json)

log = logging.getLogger(__name__)

AXIS_X, AXIS_Y, AXIS_THETA = 0, 1, 2


def fit_operator(cfg: ExperimentConfig) -> tuple[OperatorModel, SnapshotPairs]:
    system = builtin(cfg.system)
    d = cfg.dictionary_obj()
    dom = cfg.domain_box
    pts = sample_domain(cfg.data_region(), cfg.data.n_traj, cfg.data.seed)
    pairs = build_snapshot_pairs(system, pts, cfg.data.dt, cfg.data.horizon, cfg.data.substeps)
    q = cfg.quadrature
    gram = gram_matrix(d, dom, q.nodes_per_axis, q.mc_nodes, q.seed)
    model = edmd_fit(pairs, d, gram, seed=cfg.data.seed)
    model.meta.update({"system": cfg.system, "n_traj": cfg.data.n_traj, "horizon": cfg.data.horizon,
                       "substeps": cfg.data.substeps})
    return model, pairs


def check_dictionary(cfg: ExperimentConfig, model: OperatorModel) -> None:
    d = cfg.dictionary_obj()
    dom = cfg.domain_box
    if d.spec != model.dictionary.spec or dom != model.gram.domain:
        raise DictionaryMismatch(
            f"operator was fitted with {model.dictionary.spec} on {model.gram.domain}, "
            f"config asks for {d.spec} on {dom}")


def run_propagation(cfg: ExperimentConfig, model: OperatorModel, repeats: int | None = None) -> mc.PipelineResult:
    check_dictionary(cfg, model)
    m = cfg.mc
    return mc.compare_pipelines(builtin(cfg.system), model, cfg.region(), cfg.propagation.steps,
                                m.n_samples, m.seed, cfg.name, cfg.data.dt,
                                m.repeats if repeats is None else repeats, m.kde, m.kde_nodes,
                                cfg.quadrature.nodes_per_axis, cfg.data.substeps)


def pure_moment_trends(model: OperatorModel, moments) -> dict:
    """Late-minus-initial change of each pure-power monomial moment.

    Returns ``{"x1": [...], "x2": [...]}`` indexed by degree-1 and up.
    """
    d = model.dictionary
    first = np.asarray(getattr(moments[0], "m", moments[0]))
    last = np.asarray(getattr(moments[-1], "m", moments[-1]))
    out = {}
    for axis in range(d.dim):
        idx = [k for k, e in enumerate(d.exponents)
               if sum(e) > 0 and e[axis] == sum(e)]
        out[f"x{axis + 1}"] = [float(last[k] - first[k]) for k in idx]
    return out


# ---------------------------------------------------------------------------
# reachability

@dataclass
class ReachResult:
    estimated: list  # Marginal per (time, axis)
    reference: list  # Marginal built from KDE of the MC ensemble
    mc_supports: dict  # (t, axis) -> (lo, hi) from the sample range
    superset: dict  # (t, axis) -> bool
    times: list
    checks: dict = field(default_factory=dict)

    def estimated_supports(self) -> dict:
        return {(round(m.t, 9), m.axis): m.support.intervals[0] for m in self.estimated}


def support_trends(supports: dict, times) -> dict:
    """Heading support shrinks, planar supports grow, y wider than x at the end."""
    times = [round(t, 9) for t in times]

    def widths(axis):
        return [supports[(t, axis)][1] - supports[(t, axis)][0] for t in times]

    th, x, y = widths(AXIS_THETA), widths(AXIS_X), widths(AXIS_Y)
    return {
        "theta_decreasing": all(b < a for a, b in zip(th, th[1:])),
        "x_increasing": all(b > a for a, b in zip(x, x[1:])),
        "y_increasing": all(b > a for a, b in zip(y, y[1:])),
        "y_wider_than_x_at_end": y[-1] >= x[-1],
        "widths": {"x": x, "y": y, "theta": th},
    }


def run_reach(cfg: ExperimentConfig, model: OperatorModel, ensemble: mc.Ensemble | None = None) -> ReachResult:
    check_dictionary(cfg, model)
    system = builtin(cfg.system)
    region = cfg.region()
    times = list(cfg.propagation.report_times)
    dt = cfg.data.dt
    m0 = initial_moments(region, model.dictionary, cfg.quadrature.nodes_per_axis)
    est = reach_marginals(model, m0, times, cfg.reach.grid_nodes, cfg.reach.threshold, dt)
    if ensemble is None:
        pts = mc.sample_uncertainty_set(region, cfg.mc.n_samples, cfg.mc.seed)
        ensemble = mc.ensemble_simulate(system, pts, dt, max(max(times), dt), cfg.data.substeps)
    ref, mc_supports, superset = [], {}, {}
    for mg in est:
        k = int(round(mg.t / dt))
        snap = ensemble.snapshots[k]
        col = snap[:, mg.axis]
        key = (round(mg.t, 9), mg.axis)
        mc_supports[key] = (float(col.min()), float(col.max()))
        nodes = mg.raw.axes[0]
        kde = mc.marginal_projection(snap, mg.axis)
        ref.append(Marginal(mg.t, mg.axis, kde, kde.clipped_normalized(),
                            estimate_support(kde.clipped_normalized(), cfg.reach.threshold)))
        # support resolution is one grid spacing
        tol = float(nodes[1] - nodes[0])
        superset[key] = mg.support.contains_interval(0, *mc_supports[key], tol=tol)
    res = ReachResult(est, ref, mc_supports, superset, times)
    res.checks = {"superset_all": all(superset.values()),
                  "true_trends": support_trends(mc_supports, times),
                  "estimated_trends": support_trends(res.estimated_supports(), times)}
    return res


# ---------------------------------------------------------------------------
# output helpers

def write_propagation(out: Path, result: mc.PipelineResult, report: dict | None = None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_moments_csv(out / "moments.csv", result.estimated, {"mc": result.reference})
    with open(out / "report.json", "w") as fh:
        json.dump(result.report.to_json() if report is None else report, fh, indent=1)


def write_reach(out: Path, res: ReachResult) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_marginals_csv(out / "marginals.csv", res.estimated)
    write_marginals_csv(out / "mc_marginals.csv", res.reference)
    write_support_json(out / "support.json", res.estimated)
    mc_rec = [{"t": t, "axis": a, "lo": lo, "hi": hi, "threshold": None,
               "contained": res.superset[(t, a)]} for (t, a), (lo, hi) in res.mc_supports.items()]
    with open(out / "mc_support.json", "w") as fh:
        json.dump(mc_rec, fh, indent=1)


# ---------------------------------------------------------------------------
# benchmarks

BENCHMARKS = {
    "example1": ["example1"],
    "example2": ["example2a", "example2b"],
    "example3": ["example3"],
}


def _fit_key(cfg: ExperimentConfig) -> str:
    return json.dumps([cfg.system, cfg.domain, cfg.dictionary, cfg.data.__dict__,
                       cfg.quadrature.__dict__], sort_keys=True)


def benchmark(example: str, out_dir: Path | None = None, repeats: int | None = None,
              configs: list | None = None) -> tuple[list[dict], bool]:
    """Run a bundled example end to end; returns report dicts and overall pass flag."""
    if configs is None:
        if example not in BENCHMARKS:
            raise KeyError(f"unknown example {example!r}; choose from {sorted(BENCHMARKS)}")
        configs = [load_config(name) for name in BENCHMARKS[example]]
    models = {}
    reports, runs, passed = [], [], True
    for cfg in configs:
        key = _fit_key(cfg)
        if key not in models:
            models[key] = fit_operator(cfg)[0]
        model = models[key]
        prop = run_propagation(cfg, model, repeats)
        rep = prop.report.to_json()
        checks = {"speedup": rep["speedup"] >= cfg.acceptance.speedup}
        if cfg.acceptance.max_error is not None:
            checks["max_error"] = rep["max_error"] <= cfg.acceptance.max_error
        if model.dictionary.family == "monomial" and cfg.system == "toggle_switch":
            rep["pure_moment_change"] = {"estimated": pure_moment_trends(model, prop.estimated),
                                         "mc": pure_moment_trends(model, prop.reference)}
        if model.dictionary.separable:
            reach = run_reach(cfg, model, prop.ensemble)
            rep["superset"] = [{"t": t, "axis": a, "ok": ok} for (t, a), ok in reach.superset.items()]
            rep["supports"] = {"estimated": support_records(reach.estimated),
                               "mc": [{"t": t, "axis": a, "lo": lo, "hi": hi}
                                      for (t, a), (lo, hi) in reach.mc_supports.items()]}
            rep["trends"] = {"true": reach.checks["true_trends"],
                             "estimated": reach.checks["estimated_trends"]}
            checks["superset"] = reach.checks["superset_all"]
            if cfg.system == "dubins":
                est = reach.checks["estimated_trends"]
                checks["trends"] = all(v for k, v in est.items() if k != "widths")
            if out_dir is not None:
                write_reach(Path(out_dir) / cfg.name, reach)
        rep["checks"] = checks
        rep["passed"] = all(checks.values())
        passed &= rep["passed"]
        reports.append(rep)
        runs.append((cfg, model, prop))
    if example == "example2" and len(reports) == 2:
        flip = moment_flip(reports[0]["pure_moment_change"]["estimated"],
                           reports[1]["pure_moment_change"]["estimated"])
        mc_flip = moment_flip(reports[0]["pure_moment_change"]["mc"],
                              reports[1]["pure_moment_change"]["mc"])
        for rep in reports:
            rep["checks"]["moment_flip"] = flip
            rep["moment_flip_mc"] = mc_flip
            rep["passed"] = all(rep["checks"].values())
        passed &= flip
    if out_dir is not None:
        for rep, (cfg, model, prop) in zip(reports, runs):
            write_propagation(Path(out_dir) / cfg.name, prop, rep)
            model.save(Path(out_dir) / cfg.name / "operator.json")
    return reports, passed


def moment_flip(disc: dict, square: dict) -> bool:
    """Pure-x2 moments grow and pure-x1 decay for the disc set; reverse for the square."""
    return (all(v > 0 for v in disc["x2"]) and all(v < 0 for v in disc["x1"])
            and all(v > 0 for v in square["x1"]) and all(v < 0 for v in square["x2"]))
