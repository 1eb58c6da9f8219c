"""Same-dimension image-warping baseline and folding detection.

The baseline moves sites within the plane (metric least-squares scaling
against the variogram misfit), then fits a plane-to-plane thin-plate map
from the geographic to the warped sites with smoothing ``lambda_iw``.
Large ``lambda_iw`` keeps the map near-affine and the fit poor; small
``lambda_iw`` follows the warped sites and may fold the plane.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay

from .expansion import free_embedding
from .geo import as_locations, pairwise_distances, upper_pairs
from .tps import TpsModel, evaluate_tps, fit_tps
from .variogram import DispersionMatrix, VariogramParams, default_init, fit_variogram_pairs


@dataclass(frozen=True)
class WarpModel:
    warped_locations: np.ndarray  # unsmoothed scaling solution, (s, 2)
    map: TpsModel  # 2 -> 2 thin-plate map
    lambda_iw: float
    phi: VariogramParams  # refit at the mapped sites map(X)
    misfit: float  # pair misfit at map(X)
    scaling_misfit: float  # pair misfit at the warped sites themselves
    converged: bool

    def mapped(self, X) -> np.ndarray:
        return evaluate_tps(self.map, X)


def _v(disp):
    return disp.v if isinstance(disp, DispersionMatrix) else np.asarray(disp, dtype=float)


def stationary_misfit(U, disp):
    """Best exponential-variogram misfit at fixed coordinates ``U``."""
    v = _v(disp)
    D = pairwise_distances(U)
    iu = upper_pairs(D.shape[0])
    fit = fit_variogram_pairs(D[iu], v[iu], default_init(v, D))
    return fit.params, fit.sse


def warp_sites(X, disp, init=None, iters: int = 500):
    """Metric scaling in the plane, started from ``init`` (default: ``X``)."""
    Xc = as_locations(X).coords
    if Xc.shape[1] != 2:
        raise ValueError("the warping baseline is defined for 2-D sites")
    W0 = Xc.copy() if init is None else np.asarray(init, dtype=float)
    return free_embedding(W0, _v(disp), max_iters=iters)


def warp_mds(X, disp, lambda_iw: float, init=None, iters: int = 500, warped=None) -> WarpModel:
    """Fit the warping baseline for one smoothing value.

    ``warped`` may carry a precomputed ``warp_sites`` result so a sweep over
    ``lambda_iw`` reuses one scaling solution.
    """
    Xc = as_locations(X).coords
    if warped is None:
        warped = warp_sites(Xc, disp, init, iters)
    W, _, f_scaling, converged = warped
    tmap = fit_tps(Xc, W, lambda_iw)
    phi, sse = stationary_misfit(evaluate_tps(tmap, Xc), disp)
    return WarpModel(W, tmap, float(lambda_iw), phi, float(sse), float(f_scaling), bool(converged))


@dataclass(frozen=True)
class FoldingReport:
    folded: bool
    fraction_negative: float
    n_points: int
    min_det: float
    max_det: float

    def to_dict(self) -> dict:
        return {"folded": self.folded, "fraction_negative": self.fraction_negative,
                "n_points": self.n_points, "min_det": self.min_det, "max_det": self.max_det}


def hull_grid(X, resolution: int = 50) -> np.ndarray:
    """Regular grid points inside the convex hull of 2-D sites."""
    Xc = np.asarray(X, dtype=float)
    lo, hi = Xc.min(axis=0), Xc.max(axis=0)
    g1 = np.linspace(lo[0], hi[0], resolution)
    g2 = np.linspace(lo[1], hi[1], resolution)
    G = np.column_stack([a.ravel() for a in np.meshgrid(g1, g2)])
    inside = Delaunay(Xc).find_simplex(G) >= 0
    return G[inside]


def detect_folding(mapping, X, grid_resolution: int = 50, eps: float | None = None) -> FoldingReport:
    """Check a plane map for folding via Jacobian-determinant signs.

    ``mapping`` takes an ``(n, 2)`` array and returns ``(n, m)`` with
    ``m >= 2``; orientation is measured on its first two outputs (for a
    dimension-expansion map these are the geographic coordinates). The
    determinant comes from central differences on a grid over the convex
    hull of ``X``. ``folded`` is set when both signs occur.
    """
    Xc = np.asarray(X.coords if hasattr(X, "coords") else X, dtype=float)
    G = hull_grid(Xc, grid_resolution)
    if eps is None:
        eps = 1e-5 * float(np.ptp(Xc))
    cols = []
    for k in range(2):
        e = np.zeros(2)
        e[k] = eps
        fp = np.asarray(mapping(G + e), dtype=float).reshape(G.shape[0], -1)[:, :2]
        fm = np.asarray(mapping(G - e), dtype=float).reshape(G.shape[0], -1)[:, :2]
        cols.append((fp - fm) / (2 * eps))
    J = np.stack(cols, axis=-1)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    neg = det < 0
    folded = bool(neg.any() and (det > 0).any())
    return FoldingReport(folded, float(neg.mean()), int(G.shape[0]),
                         float(det.min()), float(det.max()))


def expansion_mapping(latent_map):
    """The dimension-expansion map ``x -> [x, f(x)]`` as a callable."""
    def mapping(Xn):
        Xn = np.atleast_2d(np.asarray(Xn, dtype=float))
        return np.hstack([Xn, latent_map(Xn)])
    return mapping


def folding_sweep(X, disp, lambdas, grid_resolution: int = 50, iters: int = 500):
    """Warp baseline over several smoothing values sharing one scaling solution."""
    warped = warp_sites(X, disp, iters=iters)
    out = []
    for lam in lambdas:
        wm = warp_mds(X, disp, lam, warped=warped)
        out.append((wm, detect_folding(wm.map, as_locations(X).coords, grid_resolution)))
    return out
