"""Axis-aligned boxes, balls and cylinders carrying a uniform density.

Each region knows its volume, membership, a seeded uniform sampler and a
quadrature rule (nodes and weights summing to the volume). The same objects
serve as domains of interest and as initial uncertainty sets.
"""
from __future__ import annotations

from dataclasses import dataclass
import functools
import math

import numpy as np

from .errors import InvalidRegion


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@functools.lru_cache(maxsize=64)
def _leggauss(n: int):
    t, w = np.polynomial.legendre.leggauss(n)
    t.flags.writeable = False
    w.flags.writeable = False
    return t, w


def gauss_legendre(lo: float, hi: float, n: int):
    """Gauss-Legendre nodes and weights mapped onto ``[lo, hi]``."""
    t, w = _leggauss(n)
    half = 0.5 * (hi - lo)
    return lo + half * (t + 1.0), half * w


def tensor_rule(axes):
    """Tensor product of 1-D ``(nodes, weights)`` rules.

    Returns nodes of shape ``(prod(n_i), d)`` and matching weights.
    """
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return nodes, weights


def _disc_rule(n_radial: int, n_angular: int, radius: float):
    # polar rule: Gauss-Legendre in r (Jacobian r folded into the weight),
    # equispaced angles, which is spectrally accurate for periodic integrands
    r, wr = gauss_legendre(0.0, radius, n_radial)
    phi = 2.0 * math.pi * (np.arange(n_angular) + 0.5) / n_angular
    wphi = np.full(n_angular, 2.0 * math.pi / n_angular)
    rr, pp = np.meshgrid(r, phi, indexing="ij")
    ww = np.outer(wr * r, wphi)
    return np.stack([(rr * np.cos(pp)).ravel(), (rr * np.sin(pp)).ravel()], axis=1), ww.ravel()


def _disc_marginal_rule(center: float, radius: float, n: int):
    """Rule for the chord length ``2 sqrt(r^2 - (x - c)^2)`` of a disc.

    With ``x = c + r sin(phi)`` the weight becomes the smooth ``2 r^2 cos^2``.
    """
    phi, w = gauss_legendre(-math.pi / 2, math.pi / 2, n)
    return center + radius * np.sin(phi), w * 2.0 * radius ** 2 * np.cos(phi) ** 2


@dataclass(frozen=True)
class Box:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if len(lo) != len(hi) or len(lo) == 0:
            raise InvalidRegion(f"box bounds have mismatched lengths {len(lo)} and {len(hi)}")
        if not all(np.isfinite(lo + hi)):
            raise InvalidRegion("box bounds must be finite")
        if any(a >= b for a, b in zip(lo, hi)):
            raise InvalidRegion(f"box needs lower < upper on every axis, got {lo} / {hi}")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def bounds(self):
        return np.array(self.lower), np.array(self.upper)

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        lo, hi = self.bounds()
        return np.all((x >= lo) & (x <= hi), axis=1)

    def sample(self, n: int, seed=None) -> np.ndarray:
        lo, hi = self.bounds()
        return _rng(seed).uniform(lo, hi, size=(n, self.dim))

    def quadrature(self, nodes_per_axis: int = 32, **_):
        return tensor_rule([gauss_legendre(a, b, nodes_per_axis)
                            for a, b in zip(self.lower, self.upper)])

    def axis_rules(self, nodes_per_axis: int = 32):
        """Per-axis 1-D rules for integrating functions of one coordinate."""
        out = []
        for a, (lo, hi) in enumerate(zip(self.lower, self.upper)):
            x, w = gauss_legendre(lo, hi, nodes_per_axis)
            out.append((x, w * self.volume / (hi - lo)))
        return out

    def to_dict(self) -> dict:
        return {"shape": "box", "lower": list(self.lower), "upper": list(self.upper)}


@dataclass(frozen=True)
class Ball:
    """Euclidean ball over all coordinates."""

    center: tuple
    radius: float

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(self.center))
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise InvalidRegion(f"ball radius must be positive, got {self.radius}")
        if len(c) == 0 or not all(np.isfinite(c)):
            raise InvalidRegion("ball center must be a non-empty finite vector")

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def volume(self) -> float:
        d = self.dim
        return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * self.radius ** d

    def bounds(self):
        c = np.array(self.center)
        return c - self.radius, c + self.radius

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.sum((x - np.array(self.center)) ** 2, axis=1) <= self.radius ** 2

    def sample(self, n: int, seed=None) -> np.ndarray:
        rng = _rng(seed)
        d = self.dim
        direction = rng.standard_normal((n, d))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        # area-uniform: radius ~ U^(1/d)
        r = self.radius * rng.uniform(size=(n, 1)) ** (1.0 / d)
        return np.array(self.center) + r * direction

    def quadrature(self, nodes_per_axis: int = 32, mc_nodes: int = 200_000, seed: int = 0):
        c = np.array(self.center)
        if self.dim == 1:
            return Box(c - self.radius, c + self.radius).quadrature(nodes_per_axis)
        if self.dim == 2:
            pts, w = _disc_rule(nodes_per_axis, 2 * nodes_per_axis, self.radius)
            return pts + c, w
        pts = self.sample(mc_nodes, seed)
        return pts, np.full(mc_nodes, self.volume / mc_nodes)

    def axis_rules(self, nodes_per_axis: int = 32):
        if self.dim == 1:
            return Box([self.center[0] - self.radius], [self.center[0] + self.radius]).axis_rules(nodes_per_axis)
        if self.dim != 2:
            return None
        return [_disc_marginal_rule(c, self.radius, 2 * nodes_per_axis) for c in self.center]

    def to_dict(self) -> dict:
        return {"shape": "ball", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Cylinder:
    """Disc in two coordinates times an interval in a third.

    ``disc_axes`` and ``axis`` must be disjoint and together cover every
    coordinate of the state.
    """

    center: tuple
    radius: float
    disc_axes: tuple
    axis: int
    lo: float
    hi: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "disc_axes", tuple(int(a) for a in self.disc_axes))
        object.__setattr__(self, "axis", int(self.axis))
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        if len(self.disc_axes) != 2 or len(self.center) != 2:
            raise InvalidRegion("cylinder needs exactly two disc axes and a 2-D center")
        if self.axis in self.disc_axes or len(set(self.disc_axes)) != 2:
            raise InvalidRegion("cylinder disc axes and interval axis must be disjoint")
        if sorted(self.disc_axes + (self.axis,)) != [0, 1, 2]:
            raise InvalidRegion("cylinder axes must cover coordinates 0, 1, 2")
        if not self.radius > 0 or not self.lo < self.hi:
            raise InvalidRegion("cylinder needs positive radius and lo < hi")

    @property
    def dim(self) -> int:
        return 3

    @property
    def volume(self) -> float:
        return math.pi * self.radius ** 2 * (self.hi - self.lo)

    def bounds(self):
        lo = np.empty(3)
        hi = np.empty(3)
        for c, a in zip(self.center, self.disc_axes):
            lo[a], hi[a] = c - self.radius, c + self.radius
        lo[self.axis], hi[self.axis] = self.lo, self.hi
        return lo, hi

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        a, b = self.disc_axes
        r2 = (x[:, a] - self.center[0]) ** 2 + (x[:, b] - self.center[1]) ** 2
        z = x[:, self.axis]
        return (r2 <= self.radius ** 2) & (z >= self.lo) & (z <= self.hi)

    def _assemble(self, disc, z):
        out = np.empty((len(z), 3))
        out[:, self.disc_axes[0]] = disc[:, 0]
        out[:, self.disc_axes[1]] = disc[:, 1]
        out[:, self.axis] = z
        return out

    def sample(self, n: int, seed=None) -> np.ndarray:
        rng = _rng(seed)
        disc = Ball(self.center, self.radius).sample(n, rng)
        z = rng.uniform(self.lo, self.hi, size=n)
        return self._assemble(disc, z)

    def quadrature(self, nodes_per_axis: int = 32, **_):
        disc, wd = _disc_rule(nodes_per_axis, 2 * nodes_per_axis, self.radius)
        disc = disc + np.array(self.center)
        z, wz = gauss_legendre(self.lo, self.hi, nodes_per_axis)
        nd = len(wd)
        pts = self._assemble(np.tile(disc, (len(z), 1)), np.repeat(z, nd))
        return pts, np.repeat(wz, nd) * np.tile(wd, len(z))

    def axis_rules(self, nodes_per_axis: int = 32):
        out = [None] * 3
        height = self.hi - self.lo
        for c, a in zip(self.center, self.disc_axes):
            x, w = _disc_marginal_rule(c, self.radius, 2 * nodes_per_axis)
            out[a] = (x, w * height)
        z, wz = gauss_legendre(self.lo, self.hi, nodes_per_axis)
        out[self.axis] = (z, wz * math.pi * self.radius ** 2)
        return out

    def to_dict(self) -> dict:
        return {"shape": "cylinder", "center": list(self.center), "radius": self.radius,
                "disc_axes": list(self.disc_axes), "axis": self.axis,
                "lo": self.lo, "hi": self.hi}


Region = Box | Ball | Cylinder


def region_from_dict(spec: dict) -> Region:
    """Build a region from its JSON form (``{"shape": "box", ...}``)."""
    spec = dict(spec)
    shape = spec.pop("shape", None)
    spec.pop("name", None)
    cls = {"box": Box, "ball": Ball, "cylinder": Cylinder}.get(shape)
    if cls is None:
        raise InvalidRegion(f"unknown region shape {shape!r}")
    try:
        return cls(**spec)
    except TypeError as exc:
        raise InvalidRegion(f"bad {shape} fields: {exc}") from None
