"""Dictionaries of scalar observables and their Gram matrices.

Two families are built in: scaled monomials (ordered by total degree, then
descending lexicographic exponent, constant first) and axis-separable 1-D
Gaussian RBFs. ``Dictionary.__call__`` is vectorized over a leading batch
axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement
import math
from typing import Callable, Sequence

import numpy as np
from scipy import linalg, special

from .errors import InvalidQuadrature, InvalidState, SingularGram, ConfigError
from .regions import Box


def monomial_exponents(dim: int, max_degree: int) -> list[tuple[int, ...]]:
    """Exponent tuples with total degree <= ``max_degree``, canonically ordered."""
    out = []
    for deg in range(max_degree + 1):
        level = set()
        for combo in combinations_with_replacement(range(dim), deg):
            e = [0] * dim
            for i in combo:
                e[i] += 1
            level.add(tuple(e))
        out.extend(sorted(level, reverse=True))
    return out


@dataclass(frozen=True)
class Dictionary:
    family: str
    dim: int
    size: int
    exponents: tuple = ()
    scale: tuple = ()
    centers: tuple = ()  # per-axis arrays of centers (rbf1d)
    widths: tuple = ()   # per-axis widths (rbf1d)
    functions: tuple = ()  # callables (custom)
    spec: dict = field(default_factory=dict, compare=False)

    @property
    def K(self) -> int:
        return self.size

    @property
    def separable(self) -> bool:
        return self.family == "rbf1d"

    def axis_slices(self) -> list[slice]:
        """Index range of each axis' functions in an rbf1d dictionary."""
        out, start = [], 0
        for c in self.centers:
            out.append(slice(start, start + len(c)))
            start += len(c)
        return out

    def __call__(self, x) -> np.ndarray:
        return eval_dictionary(self, x)


def eval_dictionary(d: Dictionary, x) -> np.ndarray:
    """Lift states: ``(dim,) -> (K,)`` or ``(n, dim) -> (n, K)``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != d.dim:
        raise InvalidState(f"state has length {x.shape[-1]}, dictionary expects {d.dim}")
    if not np.all(np.isfinite(x)):
        raise InvalidState("cannot lift a non-finite state")
    if d.family == "monomial":
        z = x / np.asarray(d.scale)
        top = max(max(e) for e in d.exponents)
        # powers[p][:, i] = z_i ** p
        powers = [np.ones_like(z)]
        for _ in range(top):
            powers.append(powers[-1] * z)
        out = np.empty((len(x), d.size))
        for k, e in enumerate(d.exponents):
            col = np.ones(len(x))
            for i, p in enumerate(e):
                if p:
                    col = col * powers[p][:, i]
            out[:, k] = col
    elif d.family == "rbf1d":
        out = np.concatenate([
            np.exp(-(x[:, [a]] - c[None, :]) ** 2 / (2.0 * w * w))
            for a, (c, w) in enumerate(zip(d.centers, d.widths))], axis=1)
    else:
        out = np.stack([np.asarray(f(x), dtype=float) * np.ones(len(x)) for f in d.functions], axis=1)
    return out[0] if single else out


def monomial_dictionary(dim: int, max_degree: int, scale=1.0) -> Dictionary:
    """Products of ``(x_i / s_i) ** k_i`` with total degree <= ``max_degree``."""
    if max_degree < 0:
        raise ValueError("max_degree must be >= 0")
    scale = tuple(float(s) for s in np.broadcast_to(np.asarray(scale, dtype=float), (dim,)))
    if any(s <= 0 for s in scale):
        raise ValueError(f"scale factors must be positive, got {scale}")
    exps = tuple(monomial_exponents(dim, max_degree))
    assert len(exps) == math.comb(dim + max_degree, max_degree)
    spec = {"family": "monomial", "max_degree": max_degree, "scale": list(scale)}
    return Dictionary("monomial", dim, len(exps), exponents=exps, scale=scale, spec=spec)


def rbf1d_dictionary(domain: Box, centers_per_axis: int, width="spacing") -> Dictionary:
    """Unnormalized 1-D Gaussians with centers spanning each domain axis.

    ``width="spacing"`` sets each axis' width to its center spacing; a float
    (or per-axis sequence) sets it explicitly.
    """
    if centers_per_axis < 2:
        raise ValueError("centers_per_axis must be >= 2")
    centers, widths = [], []
    for a, (lo, hi) in enumerate(zip(domain.lower, domain.upper)):
        c = np.linspace(lo, hi, centers_per_axis)
        centers.append(c)
        if width == "spacing":
            widths.append(float(c[1] - c[0]))
        else:
            widths.append(float(np.broadcast_to(np.asarray(width, dtype=float), (domain.dim,))[a]))
    spec = {"family": "rbf1d", "centers_per_axis": centers_per_axis,
            "width": width if isinstance(width, str) else widths}
    return Dictionary("rbf1d", domain.dim, domain.dim * centers_per_axis,
                      centers=tuple(centers), widths=tuple(widths), spec=spec)


def rbf_axis_integrals(d: Dictionary, domain: Box) -> list[np.ndarray]:
    """Exact integrals of each rbf1d function over its axis interval."""
    out = []
    for a, (c, w) in enumerate(zip(d.centers, d.widths)):
        s = w * math.sqrt(2.0)
        out.append(w * math.sqrt(math.pi / 2.0)
                   * (special.erf((domain.upper[a] - c) / s) - special.erf((domain.lower[a] - c) / s)))
    return out


def custom_dictionary(dim: int, functions: Sequence[Callable]) -> Dictionary:
    """Dictionary from vectorized callables ``f(x: (n, dim)) -> (n,)``."""
    return Dictionary("custom", dim, len(functions), functions=tuple(functions),
                      spec={"family": "custom", "size": len(functions)})


def dictionary_from_spec(spec: dict, domain: Box) -> Dictionary:
    allowed = {"monomial": {"family", "max_degree", "scale"},
               "rbf1d": {"family", "centers_per_axis", "width"}}
    family = spec.get("family")
    if family not in allowed:
        raise ConfigError(f"unknown or non-serializable dictionary family {family!r}")
    extra = set(spec) - allowed[family]
    if extra:
        raise ConfigError(f"unknown dictionary fields {sorted(extra)}")
    try:
        if family == "monomial":
            return monomial_dictionary(domain.dim, int(spec["max_degree"]), spec.get("scale", 1.0))
        return rbf1d_dictionary(domain, int(spec["centers_per_axis"]), spec.get("width", "spacing"))
    except KeyError as exc:
        raise ConfigError(f"dictionary spec missing field {exc}") from None


# ---------------------------------------------------------------------------
# Gram matrix

@dataclass(frozen=True)
class GramMatrix:
    matrix: np.ndarray
    method: str
    n_nodes: int
    domain: Box
    reg_factor: float = 1e-10

    @property
    def epsilon(self) -> float:
        K = len(self.matrix)
        return self.reg_factor * float(np.trace(self.matrix)) / K

    @property
    def regularized(self) -> np.ndarray:
        return self.matrix + self.epsilon * np.eye(len(self.matrix))

    def cholesky(self):
        try:
            return linalg.cho_factor(self.regularized, lower=True, check_finite=True)
        except (linalg.LinAlgError, ValueError) as exc:
            raise SingularGram(f"Gram matrix not positive definite after regularization: {exc}") from None

    def solve(self, rhs) -> np.ndarray:
        """Solve ``Lambda_reg @ z = rhs``."""
        return linalg.cho_solve(self.cholesky(), np.asarray(rhs, dtype=float))


def gram_matrix(d: Dictionary, domain: Box, nodes_per_axis: int = 32,
                mc_nodes: int = 200_000, seed: int = 0, method: str = "auto",
                reg_factor: float = 1e-10) -> GramMatrix:
    """Pairwise integrals of dictionary functions over ``domain``.

    Uses a tensor Gauss-Legendre grid for ``dim <= 3`` and seeded uniform
    Monte-Carlo nodes otherwise (or when ``method="mc"``).
    """
    if method == "auto":
        method = "gauss-legendre" if domain.dim <= 3 else "mc"
    if method == "gauss-legendre":
        if nodes_per_axis < 1:
            raise InvalidQuadrature("nodes_per_axis must be >= 1")
        nodes, weights = domain.quadrature(nodes_per_axis)
    elif method == "mc":
        if mc_nodes < 1:
            raise InvalidQuadrature("mc_nodes must be >= 1")
        nodes = domain.sample(mc_nodes, seed)
        weights = np.full(mc_nodes, domain.volume / mc_nodes)
    else:
        raise InvalidQuadrature(f"unknown quadrature method {method!r}")
    lam = weighted_products(d, nodes, weights)
    lam = 0.5 * (lam + lam.T)
    return GramMatrix(lam, method, len(weights), domain, reg_factor)


def weighted_products(d: Dictionary, nodes, weights, chunk: int = 65536) -> np.ndarray:
    """``sum_j w_j psi(x_j) psi(x_j)^T`` accumulated in fixed-size chunks."""
    out = np.zeros((d.size, d.size))
    for start in range(0, len(weights), chunk):
        psi = eval_dictionary(d, nodes[start:start + chunk])
        out += psi.T @ (psi * weights[start:start + chunk, None])
    return out
