"""Monte-Carlo reference pipeline and comparison against operator propagation."""
from __future__ import annotations

from dataclasses import dataclass, field
import statistics
import time

import numpy as np

from .dictionary import Dictionary, eval_dictionary
from .dynamics import DynamicalSystem, DEFAULT_SUBSTEPS, simulate_batch
from .errors import DegenerateBandwidth, IntegrationDiverged, InvalidRegion
from .operator import OperatorModel
from .regions import Region
from .uncertainty import DensityField, MomentVector, initial_moments, propagate_moments

KDE_NODES = 200
KDE_PAD = 4.0


@dataclass(frozen=True)
class Ensemble:
    dt: float
    snapshots: np.ndarray  # (steps + 1, n, dim)

    @property
    def n_samples(self) -> int:
        return self.snapshots.shape[1]

    def __len__(self):
        return len(self.snapshots)


def sample_uncertainty_set(region: Region, n: int, seed=None) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    if not region.volume > 0:
        raise InvalidRegion("uncertainty set has zero volume")
    return region.sample(n, seed)


def ensemble_simulate(system: DynamicalSystem, points, dt: float, horizon: float,
                      substeps: int = DEFAULT_SUBSTEPS) -> Ensemble:
    points = np.atleast_2d(points)
    if len(points) == 0:
        raise ValueError("need at least one initial point")
    states, ok = simulate_batch(system, points, dt, horizon, substeps)
    if not np.all(ok):
        bad = int(np.flatnonzero(~ok)[0])
        raise IntegrationDiverged(f"{system.name}: sample {bad} diverged", index=bad,
                                  state=points[bad])
    return Ensemble(dt, states)


def empirical_moments(samples, d: Dictionary, t: float = 0.0) -> MomentVector:
    """Sample means of the dictionary functions."""
    psi = eval_dictionary(d, np.atleast_2d(samples))
    return MomentVector(psi.mean(axis=0), t)


def moment_standard_errors(samples, d: Dictionary) -> np.ndarray:
    psi = eval_dictionary(d, np.atleast_2d(samples))
    return psi.std(axis=0, ddof=1) / np.sqrt(len(psi))


def silverman_bandwidth(samples, axis: int = 0) -> float:
    """``0.9 * min(std, IQR / 1.34) * n ** (-1/5)`` along one coordinate.

    Quartiles use the midpoint (Hazen) plotting positions, so two samples
    ``{0, 1}`` have an IQR of 1.
    """
    x = np.asarray(samples, dtype=float)
    x = x[:, axis] if x.ndim == 2 else x
    n = len(x)
    if n < 2:
        raise DegenerateBandwidth("need at least two samples")
    std = float(np.std(x, ddof=1))
    q25, q75 = np.percentile(x, [25, 75], method="hazen")
    spread = min(std, (q75 - q25) / 1.34) if q75 > q25 else std
    if not spread > 0:
        raise DegenerateBandwidth("samples have zero spread")
    return 0.9 * spread * n ** (-0.2)


def _kernel_rows(nodes, centers, h):
    z = (nodes[:, None] - centers[None, :]) / h
    return np.exp(-0.5 * z * z) / (h * np.sqrt(2.0 * np.pi))


def kde_estimate(samples, bandwidths, axes) -> DensityField:
    """Product-Gaussian kernel density on a tensor grid.

    Samples are sorted before accumulation, so the result does not depend on
    their input order.
    """
    s = np.asarray(samples, dtype=float)
    s = s[:, None] if s.ndim == 1 else s
    d = s.shape[1]
    h = np.broadcast_to(np.asarray(bandwidths, dtype=float), (d,))
    if np.any(h <= 0):
        raise DegenerateBandwidth("bandwidths must be positive")
    s = s[np.lexsort(s.T[::-1])]
    n = len(s)
    rows = [_kernel_rows(np.asarray(a, dtype=float), s[:, i], h[i]) for i, a in enumerate(axes)]
    if d == 1:
        vals = rows[0].sum(axis=1) / n
    elif d == 2:
        vals = rows[0] @ rows[1].T / n
    else:
        letters = "abcdefgh"[:d]
        vals = np.einsum(",".join(f"{c}z" for c in letters) + "->" + letters, *rows, optimize=True) / n
    return DensityField(tuple(axes), vals)


def kde_axes(samples, bandwidths, nodes: int = KDE_NODES, pad: float = KDE_PAD) -> tuple:
    """Per-axis grid over the sample range padded by ``pad`` bandwidths.

    Tying the grid to the samples keeps it fine enough to resolve kernels
    that shrink as an ensemble contracts.
    """
    s = np.atleast_2d(samples)
    return tuple(np.linspace(s[:, i].min() - pad * h, s[:, i].max() + pad * h, nodes)
                 for i, h in enumerate(np.atleast_1d(bandwidths)))


def marginal_projection(snapshot, axis: int, grid=None, nodes: int = KDE_NODES) -> DensityField:
    """1-D KDE of one coordinate with a Silverman bandwidth.

    ``grid`` fixes the evaluation nodes; by default they follow the samples.
    """
    s = np.atleast_2d(snapshot)
    if axis >= s.shape[1]:
        raise ValueError(f"axis {axis} out of range for dim {s.shape[1]}")
    col = s[:, [axis]]
    h = silverman_bandwidth(col, 0)
    axes = kde_axes(col, [h], nodes) if grid is None else (np.asarray(grid, dtype=float),)
    return kde_estimate(col, [h], axes)


# ---------------------------------------------------------------------------
# pipeline comparison

@dataclass
class ComparisonReport:
    example: str
    per_step_error: list
    max_error: float
    mc_ms: float
    op_ms: float
    speedup: float
    phases: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {"example": self.example, "max_error": self.max_error,
               "per_step_error": self.per_step_error, "mc_ms": self.mc_ms,
               "op_ms": self.op_ms, "speedup": self.speedup, "phases_ms": self.phases}
        out.update(self.extra)
        return out


@dataclass
class PipelineResult:
    report: ComparisonReport
    estimated: list  # MomentVector per step (operator)
    reference: list  # MomentVector per step (Monte-Carlo)
    ensemble: Ensemble


def _timed(fn, repeats):
    times, out = [], None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append((time.perf_counter() - t0) * 1e3)
    return out, statistics.median(times)


def run_mc_phase(system, region, d, steps, dt, n_samples, seed, substeps=DEFAULT_SUBSTEPS,
                 kde: str = "joint", kde_nodes: int = KDE_NODES, repeats: int = 1):
    """Sample, simulate, estimate densities and moments; returns results and phase times (ms)."""
    pts = sample_uncertainty_set(region, n_samples, seed)
    ens, t_sim = _timed(lambda: ensemble_simulate(system, pts, dt, steps * dt, substeps), repeats)

    def densities():
        out = []
        for snap in ens.snapshots:
            if kde == "joint" and system.dim <= 2:
                h = [silverman_bandwidth(snap, a) for a in range(system.dim)]
                out.append(kde_estimate(snap, h, kde_axes(snap, h, kde_nodes)))
            else:
                out.append([marginal_projection(snap, a, nodes=kde_nodes)
                            for a in range(system.dim)])
        return out

    if kde == "none":
        dens, t_kde = None, 0.0
    else:
        dens, t_kde = _timed(densities, repeats)
    moms, t_mom = _timed(lambda: [empirical_moments(s, d, i * dt) for i, s in enumerate(ens.snapshots)],
                         repeats)
    return ens, dens, moms, {"simulate": t_sim, "kde": t_kde, "moments": t_mom}


def run_operator_phase(model, region, steps, dt, nodes_per_axis=32, repeats=1):
    m0, t_init = _timed(lambda: initial_moments(region, model.dictionary, nodes_per_axis), repeats)
    est, t_prop = _timed(lambda: propagate_moments(model, m0, steps, dt), repeats)
    return est, {"initial_moments": t_init, "propagate": t_prop}


def compare_pipelines(system: DynamicalSystem, model: OperatorModel, region: Region, steps: int,
                      n_samples: int = 1000, seed: int = 1, name: str = "",
                      dt: float | None = None, repeats: int = 5, kde: str = "joint",
                      kde_nodes: int = KDE_NODES, nodes_per_axis: int = 32,
                      substeps: int = DEFAULT_SUBSTEPS) -> PipelineResult:
    """Monte-Carlo versus operator moment propagation with timings.

    Timings are medians over ``repeats`` runs of each phase; the MC figure
    bundles simulation, density estimation and moments.
    """
    dt = model.meta.get("dt", 0.2) if dt is None else dt
    d = model.dictionary
    ens, _, mc, mc_phases = run_mc_phase(system, region, d, steps, dt, n_samples, seed, substeps,
                                         kde, kde_nodes, repeats)
    est, op_phases = run_operator_phase(model, region, steps, dt, nodes_per_axis, repeats)
    err = [float(np.max(np.abs(a.m - b.m))) for a, b in zip(est, mc)]
    mc_ms = sum(mc_phases.values())
    op_ms = sum(op_phases.values())
    phases = {f"mc_{k}": v for k, v in mc_phases.items()}
    phases.update({f"op_{k}": v for k, v in op_phases.items()})
    report = ComparisonReport(name or system.name, err, max(err), mc_ms, op_ms, mc_ms / op_ms, phases,
                              {"n_samples": n_samples, "steps": steps, "dt": dt,
                               "speedup_without_kde": (mc_phases["simulate"] + mc_phases["moments"]) / op_ms})
    return PipelineResult(report, est, mc, ens)
