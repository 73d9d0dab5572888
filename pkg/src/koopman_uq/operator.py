"""EDMD fit of the Koopman matrix and the derived Perron-Frobenius matrix.

Convention: the Koopman matrix ``K`` maps coefficient vectors, so for
``h = Psi^T v`` the pushed observable is ``Psi^T (K v)``, and lifted data
satisfy ``Psi(y) ~ K^T Psi(x)``. Least squares gives ``K = G^+ A`` with

    G = (1/N) sum_k Psi(x_k) Psi(x_k)^T
    A = (1/N) sum_k Psi(x_k) Psi(y_k)^T

The P-F matrix is ``P = Lambda^{-1} K^T Lambda`` where ``Lambda`` is the
(regularized) Gram matrix. Moments then evolve as ``m <- K^T m`` and
density coefficients as ``w <- P w``, with ``m = Lambda w``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import json
import logging
import math

import numpy as np
from scipy import linalg

from .dictionary import Dictionary, GramMatrix, dictionary_from_spec, eval_dictionary
from .dynamics import SnapshotPairs
from .errors import EmptyData, InvalidData, SingularGram
from .regions import Box

log = logging.getLogger(__name__)

PINV_REL_TOL = 1e-10


def pseudo_inverse(M, rel_tol: float = PINV_REL_TOL) -> np.ndarray:
    """Moore-Penrose inverse by SVD, zeroing singular values below ``rel_tol * s_max``."""
    M = np.asarray(M, dtype=float)
    U, s, Vt = linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(M.T.shape)
    keep = s > rel_tol * s[0]
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (Vt.T * inv) @ U.T


def _exact_cross(P: np.ndarray, Q: np.ndarray, symmetric: bool = False) -> np.ndarray:
    # Correctly rounded sums make the result independent of pair order and
    # exactly invariant to duplicating the data set.
    n, k = P.shape
    out = np.empty((k, Q.shape[1]))
    for i in range(k):
        lo = i if symmetric else 0
        prod = P[:, i:i + 1] * Q[:, lo:]
        for j in range(prod.shape[1]):
            out[i, lo + j] = math.fsum(prod[:, j].tolist())
    if symmetric:
        iu = np.triu_indices(k, 1)
        out[(iu[1], iu[0])] = out[iu]
    return out


def lift_pairs(pairs: SnapshotPairs, d: Dictionary):
    """Lifted data ``(Psi_X, Psi_Y)`` with snapshots as rows."""
    PX = eval_dictionary(d, pairs.X.T)
    PY = eval_dictionary(d, pairs.Y.T)
    for name, P in (("x", PX), ("y", PY)):
        bad = ~np.all(np.isfinite(P), axis=1)
        if np.any(bad):
            raise InvalidData(f"non-finite lifted value at snapshot {int(np.flatnonzero(bad)[0])} ({name})")
    return PX, PY


def pf_from_koopman(K, gram: GramMatrix) -> np.ndarray:
    """``P = Lambda_reg^{-1} K^T Lambda_reg`` by a Cholesky solve."""
    lam = gram.regularized
    return linalg.cho_solve(gram.cholesky(), np.asarray(K).T @ lam)


@dataclass(frozen=True)
class FitReport:
    p50: float
    p90: float
    max: float
    mean_square: float
    condition: float
    dropped: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class OperatorModel:
    K: np.ndarray
    P: np.ndarray
    gram: GramMatrix
    dictionary: Dictionary
    residual: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (np.all(np.isfinite(self.K)) and np.all(np.isfinite(self.P))):
            raise InvalidData("operator matrices contain non-finite entries")

    @property
    def size(self) -> int:
        return len(self.K)

    @property
    def Lambda(self) -> np.ndarray:
        return self.gram.matrix

    def duality_residual(self) -> float:
        """``||Lambda_reg P - K^T Lambda_reg||_F / ||K^T Lambda_reg||_F``."""
        lam = self.gram.regularized
        rhs = self.K.T @ lam
        return float(np.linalg.norm(lam @ self.P - rhs) / np.linalg.norm(rhs))

    # -- serialization ------------------------------------------------------
    def to_json(self) -> dict:
        meta = dict(self.meta)
        meta.setdefault("domain", {"lower": list(self.gram.domain.lower),
                                   "upper": list(self.gram.domain.upper)})
        meta["gram"] = {"method": self.gram.method, "n_nodes": self.gram.n_nodes,
                        "reg_factor": self.gram.reg_factor}
        meta["residual"] = self.residual
        return {"dictionary": self.dictionary.spec, "K": self.K.tolist(),
                "Lambda": self.gram.matrix.tolist(), "P": self.P.tolist(), "meta": meta}

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def from_json(cls, data: dict) -> "OperatorModel":
        meta = dict(data["meta"])
        dom = meta["domain"]
        domain = Box(dom["lower"], dom["upper"])
        gmeta = meta.get("gram", {})
        gram = GramMatrix(np.array(data["Lambda"], dtype=float), gmeta.get("method", "unknown"),
                          gmeta.get("n_nodes", 0), domain, gmeta.get("reg_factor", 1e-10))
        d = dictionary_from_spec(data["dictionary"], domain)
        return cls(np.array(data["K"], dtype=float), np.array(data["P"], dtype=float), gram, d,
                   float(meta.get("residual", float("nan"))), meta)

    @classmethod
    def load(cls, path) -> "OperatorModel":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def edmd_fit(pairs: SnapshotPairs, d: Dictionary, gram: GramMatrix,
             rel_tol: float = PINV_REL_TOL, seed=None) -> OperatorModel:
    """Least-squares Koopman matrix from snapshot pairs, plus its P-F dual."""
    N = pairs.n_pairs if pairs.X.size else 0
    if N == 0:
        raise EmptyData("no snapshot pairs")
    if d.dim != pairs.X.shape[0]:
        raise InvalidData(f"dictionary dim {d.dim} != state dim {pairs.X.shape[0]}")
    if N < d.size:
        log.warning("only %d pairs for %d dictionary functions", N, d.size)
    PX, PY = lift_pairs(pairs, d)
    G = _exact_cross(PX, PX, symmetric=True) / N
    A = _exact_cross(PX, PY) / N
    K = pseudo_inverse(G, rel_tol) @ A
    P = pf_from_koopman(K, gram)
    res = np.linalg.norm(PY - PX @ K, axis=1)
    meta = {"N": N, "dt": pairs.dt, "seed": seed, "dropped": pairs.meta.get("dropped", 0),
            "residual_p50": float(np.percentile(res, 50)),
            "residual_p90": float(np.percentile(res, 90)),
            "condition_G": float(np.linalg.cond(G)),
            "domain": {"lower": list(gram.domain.lower), "upper": list(gram.domain.upper)}}
    return OperatorModel(K, P, gram, d, float(np.sqrt(np.mean(res ** 2))), meta)


def fit_residual(model: OperatorModel, pairs: SnapshotPairs, d: Dictionary | None = None) -> FitReport:
    """Per-pair residual ``||Psi(y) - K^T Psi(x)||`` summarized."""
    d = d or model.dictionary
    PX, PY = lift_pairs(pairs, d)
    res = np.linalg.norm(PY - PX @ model.K, axis=1)
    G = PX.T @ PX / len(PX)
    p50, p90 = np.percentile(res, [50, 90])
    return FitReport(float(p50), float(p90), float(res.max()), float(np.mean(res ** 2)),
                     float(np.linalg.cond(G)), int(pairs.meta.get("dropped", 0)))


def edmd_objective(K, PX, PY) -> float:
    """Sum of squared lifted residuals ``sum_k ||Psi(y_k) - K^T Psi(x_k)||^2``."""
    return float(np.sum((PY - PX @ K) ** 2))


def matrix_power_apply(M, v, steps: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    for _ in range(steps):
        v = M @ v
    return v


def propagate_coefficients_koopman(model: OperatorModel, v, steps: int) -> np.ndarray:
    """Observable coefficients after ``steps`` Koopman steps: ``K^steps v``."""
    return matrix_power_apply(model.K, v, steps)


def propagate_coefficients_pf(model: OperatorModel, w, steps: int) -> np.ndarray:
    """Density coefficients after ``steps`` P-F steps: ``P^steps w``."""
    return matrix_power_apply(model.P, w, steps)


__all__ = ["OperatorModel", "FitReport", "edmd_fit", "fit_residual", "pseudo_inverse",
           "pf_from_koopman", "propagate_coefficients_koopman", "propagate_coefficients_pf",
           "SingularGram", "edmd_objective", "lift_pairs"]
