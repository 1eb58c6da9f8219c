"""Exponential variogram, empirical dispersions and least-squares fitting.

The fitted model is the exponential variogram

    gamma(h) = phi1 * (1 - exp(-h / phi2)) + phi3

fit directly to the raw pair cloud of empirical dispersions (no binning).
Note that the dispersion ``v_ij`` estimates twice the semivariance; the fit
absorbs that factor into ``phi1`` and ``phi3``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .geo import upper_pairs


@dataclass(frozen=True)
class VariogramParams:
    phi1: float  # sill scale
    phi2: float  # range
    phi3: float  # nugget

    def __post_init__(self):
        vals = (self.phi1, self.phi2, self.phi3)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError(f"variogram parameters must be finite, got {vals}")
        if self.phi1 < 0 or self.phi3 < 0:
            raise ValueError(f"phi1 and phi3 must be >= 0, got {vals}")
        if self.phi2 <= 0:
            raise ValueError(f"phi2 must be > 0, got {self.phi2}")
        for name in ("phi1", "phi2", "phi3"):
            object.__setattr__(self, name, float(getattr(self, name)))

    def as_tuple(self):
        return (self.phi1, self.phi2, self.phi3)

    @property
    def sill(self) -> float:
        return self.phi1 + self.phi3


def _check_h(h):
    h = np.asarray(h, dtype=float)
    if np.any(h < 0):
        raise ValueError("distances must be nonnegative")
    return h


def evaluate_variogram(params: VariogramParams, h):
    """Semivariance at lag ``h``. ``gamma(0) == phi3`` (no nugget jump)."""
    h = _check_h(h)
    return params.phi1 * -np.expm1(-h / params.phi2) + params.phi3


def variogram_d_dh(params: VariogramParams, h):
    """Derivative of :func:`evaluate_variogram` with respect to ``h``."""
    h = _check_h(h)
    return params.phi1 / params.phi2 * np.exp(-h / params.phi2)


# Only the exponential family is implemented; the mapping exists so callers
# can look models up by name.
VARIOGRAM_MODELS = {"exponential": (evaluate_variogram, variogram_d_dh)}


@dataclass(frozen=True)
class DispersionMatrix:
    v: np.ndarray
    n_replicates: int
    pair_counts: np.ndarray = None

    @property
    def n_sites(self) -> int:
        return self.v.shape[0]

    def subset(self, idx) -> "DispersionMatrix":
        idx = np.asarray(idx)
        counts = None if self.pair_counts is None else self.pair_counts[np.ix_(idx, idx)]
        return DispersionMatrix(self.v[np.ix_(idx, idx)], self.n_replicates, counts)

    def pair_values(self) -> np.ndarray:
        return self.v[upper_pairs(self.n_sites)]


def empirical_dispersion(values) -> DispersionMatrix:
    """Replicate-averaged squared differences between every pair of sites.

    Parameters
    ----------
    values : array (s, n_rep)
        Field observations, one column per replicate. ``NaN`` marks a
        missing cell; each pair uses only the replicates where both sites
        were observed.
    """
    Y = np.asarray(values, dtype=float)
    if Y.ndim != 2 or Y.shape[1] < 1:
        raise ValueError("values must be a (sites, replicates) array with >= 1 replicate")
    if np.isinf(Y).any():
        raise ValueError("observations must be finite (use NaN for missing)")
    s = Y.shape[0]
    present = ~np.isnan(Y)
    v = np.zeros((s, s))
    counts = np.zeros((s, s), dtype=int)
    for i in range(s - 1):
        diff = Y[i + 1:] - Y[i]
        both = present[i + 1:] & present[i]
        n = both.sum(axis=1)
        sq = np.where(both, diff, 0.0) ** 2
        with np.errstate(invalid="ignore", divide="ignore"):
            v[i, i + 1:] = sq.sum(axis=1) / n
        counts[i, i + 1:] = n
    counts = counts + counts.T
    np.fill_diagonal(counts, present.sum(axis=1))
    iu = upper_pairs(s)
    empty = counts[iu] == 0
    if empty.any():
        bad = [(int(a), int(b)) for a, b in zip(iu[0][empty], iu[1][empty])]
        raise ValueError(f"no complete replicates for site pairs {bad[:10]}"
                         + (" ..." if len(bad) > 10 else ""))
    v = v + v.T
    return DispersionMatrix(v, int(Y.shape[1]), counts)


@dataclass(frozen=True)
class BinnedVariogram:
    bin_centers: np.ndarray
    bin_means: np.ndarray
    bin_counts: np.ndarray


def bin_dispersions(disp, dist, n_bins: int = 20) -> BinnedVariogram:
    """Equal-width binning of the pair cloud over ``[0, max distance]``."""
    v = disp.v if isinstance(disp, DispersionMatrix) else np.asarray(disp, dtype=float)
    dist = np.asarray(dist, dtype=float)
    if v.shape != dist.shape or v.ndim != 2 or v.shape[0] != v.shape[1]:
        raise ValueError(f"shape mismatch: dispersions {v.shape}, distances {dist.shape}")
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    iu = upper_pairs(v.shape[0])
    h, y = dist[iu], v[iu]
    hmax = h.max()
    edges = np.linspace(0.0, hmax, n_bins + 1)
    if hmax == 0:
        which = np.zeros(h.shape, dtype=int)
    else:
        which = np.clip(np.searchsorted(edges, h, side="left") - 1, 0, n_bins - 1)
    counts = np.bincount(which, minlength=n_bins)
    sums = np.bincount(which, weights=y, minlength=n_bins)
    keep = counts > 0
    centers = 0.5 * (edges[:-1] + edges[1:])
    return BinnedVariogram(centers[keep], sums[keep] / counts[keep], counts[keep])


@dataclass(frozen=True)
class VariogramFit:
    params: VariogramParams
    sse: float
    converged: bool = True


def default_init(disp, dist, n_bins: int = 15) -> VariogramParams:
    """Heuristic start: nugget = min binned dispersion, sill from the max, range = max distance / 3."""
    b = bin_dispersions(disp, dist, n_bins)
    phi3 = max(float(b.bin_means.min()), 0.0)
    phi1 = max(float(b.bin_means.max()) - phi3, 0.0)
    phi2 = float(np.max(dist)) / 3.0
    return VariogramParams(phi1, phi2 if phi2 > 0 else 1.0, phi3)


def _nnls2(g, y):
    """Nonnegative least squares for ``y ~ a*g + b`` (two columns, closed form)."""
    n = g.size
    sg, sy = g.sum(), y.sum()
    sgg, sgy = g @ g, g @ y
    det = n * sgg - sg * sg
    cands = []
    if det > 1e-300 * max(1.0, n * sgg):
        a = (n * sgy - sg * sy) / det
        b = (sgg * sy - sg * sgy) / det
        if a >= 0 and b >= 0:
            return a, b
    if sgg > 0:
        cands.append((max(sgy / sgg, 0.0), 0.0))
    cands.append((0.0, max(sy / n, 0.0)))
    best = None
    for a, b in cands:
        r = y - a * g - b
        sse = r @ r
        if best is None or sse < best[0]:
            best = (sse, a, b)
    return best[1], best[2]


def _profile(log_range, h, y):
    g = -np.expm1(-h / np.exp(log_range))
    a, b = _nnls2(g, y)
    r = y - a * g - b
    return r @ r, a, b


def pair_sse(params: VariogramParams, h, y) -> float:
    r = y - evaluate_variogram(params, h)
    return float(r @ r)


def fit_variogram_pairs(h, y, init: VariogramParams | None = None,
                        n_grid: int = 41) -> VariogramFit:
    """Least-squares exponential fit to a pair cloud ``(h, y)``.

    The model is linear in ``(phi1, phi3)`` for fixed range, so those two are
    solved exactly under nonnegativity and only ``log(phi2)`` is searched
    (coarse grid, then bounded Brent refinement).
    """
    h = np.asarray(h, dtype=float)
    y = np.asarray(y, dtype=float)
    hpos = h[h > 0]
    if np.unique(h).size < 3 or hpos.size == 0:
        raise ValueError("need at least 3 distinct pair distances to fit 3 variogram parameters")
    hmax = hpos.max()
    if init is None:
        init = VariogramParams(max(y.max() - max(y.min(), 0.0), 0.0), hmax / 3.0, max(y.min(), 0.0))
    if not np.any(y != 0):
        return VariogramFit(VariogramParams(0.0, init.phi2, 0.0), 0.0, True)

    lo, hi = np.log(hpos.min() * 1e-2), np.log(hmax * 1e3)
    grid = np.linspace(lo, hi, n_grid)
    li = np.log(init.phi2)
    if lo < li < hi:
        grid = np.sort(np.append(grid, li))
    vals = np.array([_profile(t, h, y)[0] for t in grid])
    k = int(np.argmin(vals))
    a_, b_ = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    converged = True
    if a_ < b_:
        res = minimize_scalar(_profile_sse, bounds=(a_, b_), args=(h, y),
                              method="bounded", options={"xatol": 1e-10})
        t = res.x if res.fun <= vals[k] else grid[k]
        converged = bool(res.success)
    else:
        t = grid[k]
    if k in (0, grid.size - 1):
        converged = False
    sse, a, b = _profile(t, h, y)
    params = VariogramParams(a, float(np.exp(t)), b)
    sse0 = pair_sse(init, h, y)
    if sse0 < sse:
        params, sse = init, sse0
    return VariogramFit(params, float(sse), converged)


def _profile_sse(t, h, y):
    return _profile(t, h, y)[0]


def fit_variogram(disp, dist, init: VariogramParams | None = None) -> VariogramFit:
    """Fit the exponential variogram to all ``i < j`` pairs of a dispersion matrix."""
    v = disp.v if isinstance(disp, DispersionMatrix) else np.asarray(disp, dtype=float)
    dist = np.asarray(dist, dtype=float)
    if v.shape != dist.shape:
        raise ValueError(f"shape mismatch: dispersions {v.shape}, distances {dist.shape}")
    iu = upper_pairs(v.shape[0])
    if init is None and np.unique(dist[iu]).size >= 1 and np.max(dist) > 0:
        init = default_init(v, dist)
    fit = fit_variogram_pairs(dist[iu], v[iu], init)
    if not fit.converged:
        warnings.warn("variogram range estimate hit its search bound", RuntimeWarning, stacklevel=2)
    return fit
