"""Moment vectors of uniform uncertainty sets, their propagation, and
density/support reconstruction from propagated moments."""
from __future__ import annotations

from dataclasses import dataclass
import csv
import json
import logging

import numpy as np

from .dictionary import Dictionary, GramMatrix, eval_dictionary, rbf_axis_integrals
from .errors import EmptySupport, InvalidRegion, UnsupportedDictionary
from .operator import OperatorModel
from .regions import Box, Region

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 1e-3


@dataclass(frozen=True)
class MomentVector:
    m: np.ndarray
    t: float = 0.0

    def __len__(self):
        return len(self.m)


@dataclass(frozen=True)
class DensityField:
    axes: tuple  # per-axis strictly increasing node arrays
    values: np.ndarray  # shape (len(axes[0]), ..., len(axes[-1]))

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        object.__setattr__(self, "axes", axes)
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != tuple(len(a) for a in axes):
            raise ValueError(f"values shape {vals.shape} does not match grid")
        if any(np.any(np.diff(a) <= 0) for a in axes):
            raise ValueError("grid nodes must be strictly increasing")
        if not np.all(np.isfinite(vals)):
            raise ValueError("density values must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return len(self.axes)

    def integral(self) -> float:
        v = self.values
        for a in reversed(self.axes):
            v = np.trapezoid(v, a, axis=-1)
        return float(v)

    def clipped_normalized(self) -> "DensityField":
        """Negative values set to zero, then rescaled to unit trapezoid mass."""
        clipped = DensityField(self.axes, np.clip(self.values, 0.0, None))
        mass = clipped.integral()
        if mass <= 0:
            return clipped
        return DensityField(self.axes, clipped.values / mass)


@dataclass(frozen=True)
class ReachableSet:
    intervals: tuple  # per-axis (lo, hi)
    mask: np.ndarray
    threshold: float

    def contains_interval(self, axis: int, lo: float, hi: float, tol: float = 0.0) -> bool:
        a, b = self.intervals[axis]
        return a <= lo + tol and b >= hi - tol

    def width(self, axis: int = 0) -> float:
        a, b = self.intervals[axis]
        return b - a


def initial_moments(region: Region, d: Dictionary, nodes_per_axis: int = 32,
                    domain: Box | None = None, mc_nodes: int = 200_000, seed: int = 0) -> MomentVector:
    """Moments of the uniform density on ``region``: ``(1/vol) int phi_k``.

    Computed by a quadrature rule fitted to the set's geometry; no sampling
    for boxes, discs and cylinders.
    """
    vol = region.volume
    if not vol > 0:
        raise InvalidRegion("uncertainty set has zero volume")
    if domain is not None:
        lo, hi = region.bounds()
        if np.any(lo < np.array(domain.lower)) or np.any(hi > np.array(domain.upper)):
            log.warning("uncertainty set extends outside the dictionary domain")
    rules = region.axis_rules(nodes_per_axis) if d.separable else None
    if rules is not None:
        # each function reads one coordinate, so 1-D marginal rules suffice
        m = np.concatenate([
            np.exp(-(x[:, None] - c[None, :]) ** 2 / (2.0 * w * w)).T @ wx
            for (x, wx), c, w in zip(rules, d.centers, d.widths)])
        return MomentVector(m / vol, 0.0)
    nodes, weights = region.quadrature(nodes_per_axis, mc_nodes=mc_nodes, seed=seed)
    psi = eval_dictionary(d, nodes)
    return MomentVector(psi.T @ weights / vol, 0.0)


def propagate_moments(model: OperatorModel, m0, steps: int, dt: float | None = None) -> list[MomentVector]:
    """``m_{i+1} = K^T m_i`` for ``steps`` steps; returns all ``steps + 1`` vectors."""
    m = np.asarray(getattr(m0, "m", m0), dtype=float)
    if len(m) != model.size:
        raise ValueError(f"moment length {len(m)} != operator size {model.size}")
    dt = model.meta.get("dt", 1.0) if dt is None else dt
    t0 = getattr(m0, "t", 0.0)
    KT = model.K.T
    out = [MomentVector(m, t0)]
    for i in range(steps):
        m = KT @ m
        out.append(MomentVector(m, t0 + (i + 1) * dt))
    return out


def moments_to_coefficients(gram: GramMatrix, m) -> np.ndarray:
    """Density coefficients ``w`` with ``Lambda_reg w = m``."""
    m = np.asarray(getattr(m, "m", m), dtype=float)
    if len(m) != len(gram.matrix):
        raise ValueError("moment and Gram sizes differ")
    return gram.solve(m)


def grid_axes(box: Box, nodes_per_axis: int = 200) -> tuple:
    return tuple(np.linspace(lo, hi, nodes_per_axis) for lo, hi in zip(box.lower, box.upper))


def reconstruct_density(d: Dictionary, w, axes) -> DensityField:
    """Evaluate ``Psi(x)^T w`` on a tensor grid (raw values, signs kept)."""
    axes = tuple(np.asarray(a, dtype=float) for a in axes)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=1)
    vals = eval_dictionary(d, pts) @ np.asarray(w, dtype=float)
    return DensityField(axes, vals.reshape(mesh[0].shape))


def estimate_support(field: DensityField, rel_threshold: float = DEFAULT_THRESHOLD) -> ReachableSet:
    """Nodes above ``rel_threshold * max`` and their per-axis extent."""
    vmax = float(np.max(field.values)) if field.values.size else 0.0
    if not vmax > 0:
        raise EmptySupport("field has no positive values")
    mask = field.values > rel_threshold * vmax
    idx = np.nonzero(mask)
    intervals = tuple((float(a[i.min()]), float(a[i.max()])) for a, i in zip(field.axes, idx))
    return ReachableSet(intervals, mask, rel_threshold)


@dataclass(frozen=True)
class Marginal:
    t: float
    axis: int
    raw: DensityField
    field: DensityField  # clipped and normalized
    support: ReachableSet


def axis_marginal(d: Dictionary, w, axis: int, nodes, domain: Box) -> DensityField:
    """Marginal of ``Psi(x)^T w`` along one axis, integrating out the others.

    For an axis-separable dictionary the reconstructed field is a sum of
    1-D terms, so the marginal is the axis' own term times the volume of
    the remaining axes plus constants contributed by the other terms. The
    constants matter: shifting a constant between axes leaves the field
    unchanged but shifts each axis' term.
    """
    w = np.asarray(w, dtype=float)
    slices = d.axis_slices()
    lengths = np.subtract(domain.upper, domain.lower)
    other_vol = float(np.prod(np.delete(lengths, axis)))
    integrals = rbf_axis_integrals(d, domain)
    const = sum(other_vol / lengths[b] * float(integrals[b] @ w[slices[b]])
                for b in range(d.dim) if b != axis)
    nodes = np.asarray(nodes, dtype=float)
    c, width = d.centers[axis], d.widths[axis]
    phi = np.exp(-(nodes[:, None] - c[None, :]) ** 2 / (2.0 * width * width))
    return DensityField((nodes,), other_vol * (phi @ w[slices[axis]]) + const)


def reach_marginals(model: OperatorModel, m0, times, grid_nodes: int = 200,
                    rel_threshold: float = DEFAULT_THRESHOLD, dt: float | None = None) -> list[Marginal]:
    """Per-time, per-axis reconstructed marginals and their supports.

    ``times`` are in seconds and rounded to whole steps of ``dt``. Supports
    are taken from the clipped, unit-mass marginal.
    """
    d = model.dictionary
    if not d.separable:
        raise UnsupportedDictionary(f"marginals need an axis-separable dictionary, got {d.family}")
    dt = model.meta.get("dt", 1.0) if dt is None else dt
    steps = [int(round(t / dt)) for t in times]
    traj = propagate_moments(model, m0, max(steps) if steps else 0, dt)
    domain = model.gram.domain
    axes = grid_axes(domain, grid_nodes)
    out = []
    for s in steps:
        w = moments_to_coefficients(model.gram, traj[s].m)
        for a in range(d.dim):
            raw = axis_marginal(d, w, a, axes[a], domain)
            field = raw.clipped_normalized()
            out.append(Marginal(traj[s].t, a, raw, field, estimate_support(field, rel_threshold)))
    return out


# ---------------------------------------------------------------------------
# file formats

def write_moments_csv(path, moments: list[MomentVector], extra: dict | None = None) -> None:
    """``t,m1,...,mK`` rows; ``extra`` maps column-prefix -> list of vectors."""
    K = len(moments[0])
    header = ["t"] + [f"m{k + 1}" for k in range(K)]
    for prefix in extra or {}:
        header += [f"{prefix}{k + 1}" for k in range(K)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, mv in enumerate(moments):
            row = [repr(float(mv.t))] + [repr(float(v)) for v in mv.m]
            for vecs in (extra or {}).values():
                row += [repr(float(v)) for v in getattr(vecs[i], "m", vecs[i])]
            w.writerow(row)


def write_marginals_csv(path, marginals: list[Marginal]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["axis", "t", "node", "value_raw", "value_clipped_normalized"])
        for mg in marginals:
            for x, raw, cn in zip(mg.raw.axes[0], mg.raw.values, mg.field.values):
                w.writerow([mg.axis, repr(float(mg.t)), repr(float(x)), repr(float(raw)), repr(float(cn))])


def support_records(marginals: list[Marginal]) -> list[dict]:
    return [{"t": mg.t, "axis": mg.axis, "lo": mg.support.intervals[0][0],
             "hi": mg.support.intervals[0][1], "threshold": mg.support.threshold}
            for mg in marginals]


def write_support_json(path, marginals: list[Marginal]) -> None:
    with open(path, "w") as fh:
        json.dump(support_records(marginals), fh, indent=1)
