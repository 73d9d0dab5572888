"""Continuous-time systems, fixed-step RK4 flow maps and snapshot data.

Right-hand sides are vectorized: ``rhs(x)`` accepts an array whose last
axis is the state and returns an array of the same shape. A single state
and a batch of ``n`` states (shape ``(n, dim)``) go through the same code.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import csv
import logging
import math
from typing import Callable

import numpy as np

from .errors import IntegrationDiverged, InvalidState, InvalidRegion
from .regions import Box, Region

log = logging.getLogger(__name__)

DEFAULT_SUBSTEPS = 10


@dataclass(frozen=True)
class DynamicalSystem:
    name: str
    dim: int
    rhs: Callable[[np.ndarray], np.ndarray]
    domain: Box

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if not isinstance(self.domain, Box):
            object.__setattr__(self, "domain", Box(*self.domain))
        if self.domain.dim != self.dim:
            raise InvalidRegion(f"domain has {self.domain.dim} axes, system has {self.dim}")

    def __call__(self, x):
        return self.rhs(x)


@dataclass(frozen=True)
class Trajectory:
    dt: float
    states: np.ndarray  # (length, dim), row i at time i*dt

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.states, dtype=float))
        if len(s) < 1 or not np.all(np.isfinite(s)):
            raise InvalidState("trajectory needs at least one finite state")
        object.__setattr__(self, "states", s)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.states)) * self.dt

    def __len__(self):
        return len(self.states)


@dataclass(frozen=True)
class SnapshotPairs:
    """Column-stacked snapshot pairs ``Y[:, k] = F(X[:, k])``."""

    X: np.ndarray  # (dim, N)
    Y: np.ndarray  # (dim, N)
    dt: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if X.ndim != 2 or X.shape != Y.shape or X.shape[1] < 1:
            raise InvalidState(f"X and Y must share a (dim, N>=1) shape, got {X.shape} and {Y.shape}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n_pairs(self) -> int:
        return self.X.shape[1]

    def verify(self, system: DynamicalSystem, substeps: int = DEFAULT_SUBSTEPS,
               n_check: int = 8, seed: int = 0, atol: float = 1e-12) -> None:
        """Re-integrate a sampled subset of columns and check ``y = F(x)``."""
        rng = np.random.default_rng(seed)
        idx = rng.choice(self.n_pairs, size=min(n_check, self.n_pairs), replace=False)
        got = flow_map(system, self.X[:, idx].T, self.dt, substeps)
        err = np.max(np.abs(got - self.Y[:, idx].T))
        if err > atol * max(1.0, np.max(np.abs(self.Y[:, idx]))):
            raise InvalidState(f"snapshot pairs are not one-step images (max deviation {err:.3g})")


def _rk4(rhs, x, h):
    k1 = rhs(x)
    k2 = rhs(x + 0.5 * h * k1)
    k3 = rhs(x + 0.5 * h * k2)
    k4 = rhs(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_state(system, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != system.dim:
        raise InvalidState(f"state has length {x.shape[-1]}, expected {system.dim}")
    if not np.all(np.isfinite(x)):
        raise InvalidState("state must be finite")
    return x


def _flow_unchecked(system, x, dt, substeps):
    """Integrate a batch, returning final states and a per-row finite mask.

    Rows that go non-finite are frozen at NaN; the rest keep integrating.
    """
    h = dt / substeps
    x = np.array(x, dtype=float)
    with np.errstate(all="ignore"):
        for _ in range(substeps):
            x = _rk4(system.rhs, x, h)
    ok = np.all(np.isfinite(x), axis=-1)
    return x, ok


def rk4_step(system: DynamicalSystem, x, dt: float) -> np.ndarray:
    """One classical Runge-Kutta step of size ``dt``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = _check_state(system, x)
    with np.errstate(all="ignore"):
        k1 = system.rhs(x)
        k2 = system.rhs(x + 0.5 * dt * k1)
        k3 = system.rhs(x + 0.5 * dt * k2)
        k4 = system.rhs(x + dt * k3)
    for frac, k in ((0.0, k1), (0.5, k2), (0.5, k3), (1.0, k4)):
        if not np.all(np.isfinite(k)):
            raise IntegrationDiverged(
                f"{system.name}: non-finite RK4 stage at t+{frac * dt:g}",
                time=frac * dt, state=x)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def flow_map(system: DynamicalSystem, x, dt: float, substeps: int = DEFAULT_SUBSTEPS) -> np.ndarray:
    """Time-``dt`` flow realized as ``substeps`` RK4 steps of ``dt/substeps``.

    ``x`` may be one state or an ``(n, dim)`` batch.
    """
    if substeps < 1:
        raise ValueError(f"substeps must be >= 1, got {substeps}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = _check_state(system, x)
    h = dt / substeps
    for i in range(substeps):
        with np.errstate(all="ignore"):
            nxt = _rk4(system.rhs, x, h)
        bad = ~np.all(np.isfinite(nxt), axis=-1)
        if np.any(bad):
            index = int(np.flatnonzero(np.atleast_1d(bad))[0]) if nxt.ndim > 1 else None
            raise IntegrationDiverged(
                f"{system.name}: integration diverged at t={i * h:g}",
                time=i * h, state=x if index is None else x[index], index=index)
        x = nxt
    return x


def n_steps(horizon: float, dt: float) -> int:
    """Number of sample intervals in ``horizon``, tolerant to float noise."""
    if not dt > 0 or not horizon >= 0:
        raise ValueError(f"need dt > 0 and horizon >= 0, got horizon={horizon}, dt={dt}")
    return int(math.floor(horizon / dt + 1e-9))


def simulate_trajectory(system: DynamicalSystem, x0, dt: float, horizon: float,
                        substeps: int = DEFAULT_SUBSTEPS) -> Trajectory:
    steps = n_steps(horizon, dt)
    states = [_check_state(system, x0)]
    for i in range(steps):
        try:
            states.append(flow_map(system, states[-1], dt, substeps))
        except IntegrationDiverged as exc:
            raise IntegrationDiverged(
                f"{system.name}: trajectory diverged in interval {i}",
                time=i * dt + (exc.time or 0.0), state=states[-1],
                prefix=Trajectory(dt, np.array(states))) from exc
    return Trajectory(dt, np.array(states))


def simulate_batch(system: DynamicalSystem, points, dt: float, horizon: float,
                   substeps: int = DEFAULT_SUBSTEPS):
    """Integrate many initial points at once.

    Returns ``(states, ok)`` with ``states`` of shape ``(steps+1, n, dim)``
    and ``ok`` flagging trajectories that stayed finite throughout.
    """
    steps = n_steps(horizon, dt)
    x = _check_state(system, np.atleast_2d(points))
    out = np.empty((steps + 1,) + x.shape)
    out[0] = x
    ok = np.ones(len(x), dtype=bool)
    for i in range(steps):
        x, finite = _flow_unchecked(system, x, dt, substeps)
        ok &= finite
        out[i + 1] = x
    return out, ok


def sample_domain(region: Region, n: int, seed=None) -> np.ndarray:
    """``n`` uniform points in ``region`` as an ``(n, dim)`` array."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not region.volume > 0:
        raise InvalidRegion("region has zero volume")
    return region.sample(n, seed)


def build_snapshot_pairs(system: DynamicalSystem, points, dt: float, horizon: float,
                         substeps: int = DEFAULT_SUBSTEPS, verify: bool = True) -> SnapshotPairs:
    """Simulate every initial point and stack consecutive states as pairs.

    Diverged trajectories are dropped and counted in ``meta["dropped"]``.
    Pairs are ordered trajectory-major.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    states, ok = simulate_batch(system, points, dt, horizon, substeps)
    dropped = int(np.sum(~ok))
    if dropped:
        log.warning("%s: dropped %d diverged trajectories of %d", system.name, dropped, len(ok))
    states = states[:, ok, :]
    if states.shape[1] == 0:
        raise IntegrationDiverged(f"{system.name}: every trajectory diverged")
    # (steps+1, n, dim) -> trajectory-major columns
    X = states[:-1].transpose(1, 0, 2).reshape(-1, system.dim).T
    Y = states[1:].transpose(1, 0, 2).reshape(-1, system.dim).T
    pairs = SnapshotPairs(X, Y, dt, meta={"n_traj": int(ok.sum()), "dropped": dropped,
                                          "steps": states.shape[0] - 1, "substeps": substeps})
    if verify:
        pairs.verify(system, substeps)
    return pairs


def extend_with_parameters(system: DynamicalSystem, ranges, rhs=None) -> DynamicalSystem:
    """Append constant parameters to the state.

    ``ranges`` is a list of ``(lo, hi)`` per parameter. ``rhs(z, p)`` gives
    the state derivative given state ``z`` and parameters ``p`` (both with
    the trailing axis as coordinates); without it the original right-hand
    side is used and parameters do not feed back.
    """
    ranges = [tuple(map(float, r)) for r in ranges]
    if not ranges:
        raise ValueError("need at least one parameter range")
    n = system.dim
    base = rhs if rhs is not None else (lambda z, p: system.rhs(z))

    def extended(x):
        x = np.asarray(x, dtype=float)
        dz = base(x[..., :n], x[..., n:])
        return np.concatenate([dz, np.zeros_like(x[..., n:])], axis=-1)

    lo = system.domain.lower + tuple(r[0] for r in ranges)
    hi = system.domain.upper + tuple(r[1] for r in ranges)
    return DynamicalSystem(f"{system.name}+params", n + len(ranges), extended, Box(lo, hi))


def write_trajectories_csv(path, trajectories, precision: int = 17) -> None:
    """Write ``traj_id,t,x1,...,xn`` rows for a list of trajectories."""
    dim = trajectories[0].states.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["traj_id", "t"] + [f"x{i + 1}" for i in range(dim)])
        for tid, traj in enumerate(trajectories):
            for t, s in zip(traj.times, traj.states):
                w.writerow([tid, f"{t:.{precision}g}"] + [f"{v:.{precision}g}" for v in s])


# ---------------------------------------------------------------------------
# built-in systems

def linear_system(A, domain=None, name: str = "linear") -> DynamicalSystem:
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    domain = domain or Box([-1.0] * n, [1.0] * n)
    return DynamicalSystem(name, n, lambda x: np.asarray(x) @ A.T, domain)


def _example1_rhs(x):
    x1, x2 = x[..., 0], x[..., 1]
    return np.stack([x2, -1.5 * x1 - x2 + x2 ** 3 / 9.0], axis=-1)


def example1() -> DynamicalSystem:
    """Damped planar system with a cubic term; stable focus at the origin."""
    return DynamicalSystem("example1", 2, _example1_rhs, Box([-3.0, -3.0], [3.0, 3.0]))


def _toggle_rhs(x, decay=0.5):
    x1, x2 = x[..., 0], x[..., 1]
    # negative concentrations have no real power; they yield NaN and count as divergence
    return np.stack([1.0 / (1.0 + x2 ** 3.55) - decay * x1,
                     1.0 / (1.0 + x1 ** 3.53) - decay * x2], axis=-1)


def toggle_switch() -> DynamicalSystem:
    """Two-gene mutual repression model with exponents 3.55 and 3.53."""
    return DynamicalSystem("toggle_switch", 2, _toggle_rhs, Box([0.0, 0.0], [2.5, 2.5]))


def toggle_rhs_parametric(z, p):
    """Toggle switch with the decay rate read from ``p[..., 0]``."""
    return _toggle_rhs(z, decay=p[..., 0])


DUBINS_VDX = 0.6
DUBINS_VDY = 0.6
DUBINS_B = 2.0


def _dubins_rhs(x):
    th = x[..., 2]
    c, s = np.cos(th), np.sin(th)
    v = DUBINS_VDX * c + DUBINS_VDY * s
    w = (DUBINS_VDY * c - DUBINS_VDX * s) / DUBINS_B
    return np.stack([v * c, v * s, w], axis=-1)


def dubins_closed_loop() -> DynamicalSystem:
    """Dubins car under the velocity-tracking feedback; heading tends to pi/4."""
    return DynamicalSystem("dubins", 3, _dubins_rhs, Box([-4.0, -4.0, -1.5], [6.0, 6.0, 1.5]))


BUILTINS = {
    "example1": example1,
    "toggle_switch": toggle_switch,
    "dubins": dubins_closed_loop,
}


def builtin(name: str) -> DynamicalSystem:
    try:
        return BUILTINS[name]()
    except KeyError:
        raise KeyError(f"unknown built-in system {name!r}; choose from {sorted(BUILTINS)}") from None
