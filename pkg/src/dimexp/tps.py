"""Smoothing thin-plate splines on the plane.

A fitted spline is ``f(x) = a0 + a1 x1 + a2 x2 + sum_i w_i k(|x - x_i|)``
with ``k(r) = r^2 log r`` and side conditions ``sum w = 0``,
``sum w x_i = 0``. Fitting minimizes

    sum_i (y_i - f(x_i))^2 + lambda2 * J(f),

where ``J`` is the bending-energy integral of the squared second
derivatives. Since ``laplacian^2 k = 8 pi delta`` in 2-D, ``J(f) = 8 pi w' K w``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .geo import as_locations, cross_distances

ENERGY_CONST = 8.0 * np.pi


def tps_kernel(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    pos = r > 0
    out[pos] = r[pos] ** 2 * np.log(r[pos])
    return out


def _affine_basis(X):
    return np.column_stack([np.ones(X.shape[0]), X])


@dataclass(frozen=True)
class TpsModel:
    knots: np.ndarray  # (n, 2)
    weights: np.ndarray  # (n, m) radial weights
    affine: np.ndarray  # (3, m): constant, x1, x2
    lambda2: float  # raw smoothing weight on J(f)

    @property
    def n_outputs(self) -> int:
        return self.weights.shape[1]

    def __call__(self, X_new):
        return evaluate_tps(self, X_new)

    def to_dict(self) -> dict:
        return {
            "knots": self.knots.tolist(),
            "weights": self.weights.tolist(),
            "affine": self.affine.tolist(),
            "lambda2": self.lambda2,
        }

    @classmethod
    def from_dict(cls, d) -> "TpsModel":
        return cls(np.array(d["knots"], dtype=float), np.array(d["weights"], dtype=float),
                   np.array(d["affine"], dtype=float), float(d["lambda2"]))


def mean_knot_distance(X) -> float:
    X = np.asarray(X, dtype=float)
    D = cross_distances(X, X)
    n = X.shape[0]
    return float(D.sum() / (n * (n - 1)))


def raw_lambda2(X, lambda2: float, units: str = "raw") -> float:
    """Convert a scale-free smoothing value to the raw weight on ``J(f)``.

    Rescaling coordinates by ``c`` divides ``J`` by ``c^2``, so the
    ``"normalized"`` value is multiplied by the squared mean inter-knot
    distance.
    """
    if lambda2 < 0:
        raise ValueError("lambda2 must be >= 0")
    if units == "raw":
        return float(lambda2)
    if units == "normalized":
        return float(lambda2) * mean_knot_distance(X) ** 2
    raise ValueError(f"unknown lambda2 units {units!r}")


def _merge_duplicates(X, Y):
    _, first, inverse = np.unique(np.round(X, 12), axis=0, return_index=True, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    if first.size == X.shape[0]:
        return X, Y
    warnings.warn(f"merged {X.shape[0] - first.size} duplicate knot(s) by averaging targets",
                  RuntimeWarning, stacklevel=3)
    n = first.size
    Ym = np.zeros((n, Y.shape[1]))
    np.add.at(Ym, inverse, Y)
    Ym /= np.bincount(inverse, minlength=n)[:, None]
    return X[first], Ym


def fit_tps(X, targets, lambda2: float = 0.0, units: str = "raw") -> TpsModel:
    """Fit a (smoothing) thin-plate spline from 2-D sites to one or more targets.

    ``lambda2 = 0`` interpolates; ``lambda2 -> inf`` gives the least-squares
    plane. ``units="normalized"`` scales ``lambda2`` by the squared mean
    inter-knot distance so values transfer across coordinate scales.
    """
    X = as_locations(X).coords if not isinstance(X, np.ndarray) else np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != 2:
        raise ValueError(f"thin-plate mapping needs 2-D sites, got shape {X.shape}")
    Y = np.asarray(targets, dtype=float)
    Y = Y[:, None] if Y.ndim == 1 else Y
    if Y.shape[0] != X.shape[0]:
        raise ValueError(f"{Y.shape[0]} targets for {X.shape[0]} sites")
    if not (np.isfinite(X).all() and np.isfinite(Y).all()):
        raise ValueError("sites and targets must be finite")
    lam = raw_lambda2(X, lambda2, units)
    X, Y = _merge_duplicates(X, Y)
    n = X.shape[0]
    P = _affine_basis(X)
    Xc = X - X.mean(axis=0)
    if n < 3 or np.linalg.matrix_rank(Xc, tol=1e-10 * max(1.0, np.abs(Xc).max())) < 2:
        raise ValueError("thin-plate spline needs at least 3 non-collinear sites "
                         "(sites are collinear, so the affine part is not identifiable)")
    K = tps_kernel(cross_distances(X, X))
    A = np.zeros((n + 3, n + 3))
    A[:n, :n] = K + ENERGY_CONST * lam * np.eye(n)
    A[:n, n:] = P
    A[n:, :n] = P.T
    rhs = np.vstack([Y, np.zeros((3, Y.shape[1]))])
    sol = np.linalg.solve(A, rhs)
    return TpsModel(X.copy(), sol[:n], sol[n:], lam)


def evaluate_tps(model: TpsModel, X_new) -> np.ndarray:
    """Evaluate at new 2-D sites. Returns ``(n,)`` for single-output models."""
    Xn = np.asarray(X_new, dtype=float)
    Xn = Xn[None, :] if Xn.ndim == 1 else Xn
    if Xn.shape[1] != 2:
        raise ValueError("thin-plate models take 2-D inputs")
    out = _affine_basis(Xn) @ model.affine + tps_kernel(cross_distances(Xn, model.knots)) @ model.weights
    return out[:, 0] if model.n_outputs == 1 else out


def bending_energy(model: TpsModel):
    """Bending energy ``8 pi w' K w`` per output (a float for single-output models)."""
    K = tps_kernel(cross_distances(model.knots, model.knots))
    W = model.weights
    e = ENERGY_CONST * np.einsum("ik,ij,jk->k", W, K, W)
    e = np.maximum(e, 0.0)
    return float(e[0]) if model.n_outputs == 1 else e


def tps_jacobian(model: TpsModel, X_new, eps: float = None) -> np.ndarray:
    """Central-difference Jacobians, shape ``(n, m, 2)``."""
    Xn = np.asarray(X_new, dtype=float)
    if eps is None:
        eps = 1e-6 * max(1.0, float(np.ptp(model.knots)))
    J = []
    for k in range(2):
        e = np.zeros(2)
        e[k] = eps
        fp = np.atleast_2d(evaluate_tps(model, Xn + e).T).T
        fm = np.atleast_2d(evaluate_tps(model, Xn - e).T).T
        J.append((fp - fm) / (2 * eps))
    return np.stack(J, axis=-1).reshape(Xn.shape[0], -1, 2)


@dataclass(frozen=True)
class LatentMap:
    """One spline per active latent dimension, and the smoothed training latents."""

    models: dict  # latent column index -> TpsModel
    Z_smoothed: np.ndarray
    lambda2: float
    p: int

    def __call__(self, X_new) -> np.ndarray:
        Xn = np.atleast_2d(np.asarray(X_new, dtype=float))
        Z = np.zeros((Xn.shape[0], self.p))
        for k, m in self.models.items():
            Z[:, k] = evaluate_tps(m, Xn)
        return Z

    def to_dict(self) -> dict:
        return {"lambda2": self.lambda2, "p": self.p,
                "models": {str(k): m.to_dict() for k, m in self.models.items()},
                "Z_smoothed": self.Z_smoothed.tolist()}

    @classmethod
    def from_dict(cls, d) -> "LatentMap":
        models = {int(k): TpsModel.from_dict(m) for k, m in d["models"].items()}
        Zs = np.array(d["Z_smoothed"], dtype=float).reshape(-1, int(d["p"]))
        return cls(models, Zs, float(d["lambda2"]), int(d["p"]))


def map_latent(X, solution, lambda2: float, units: str = "raw") -> LatentMap:
    """Fit a thin-plate spline for each active latent column of ``solution.Z``.

    Inactive columns map to zero everywhere; ``Z_smoothed`` is ``f(X)``.
    """
    Xc = as_locations(X).coords
    Z = np.asarray(solution.Z, dtype=float)
    models = {}
    Zs = np.zeros_like(Z)
    for k in solution.active_dims:
        m = fit_tps(Xc, Z[:, k], lambda2, units)
        models[int(k)] = m
        Zs[:, k] = evaluate_tps(m, Xc)
    lam = raw_lambda2(Xc, lambda2, units)
    return LatentMap(models, Zs, lam, Z.shape[1])
