"""Kriging in the expanded space and leave-k-out cross-validation over (lambda1, lambda2)."""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .expansion import ExpansionConfig, expansion_path, select_from_path
from .geo import ExpandedLocations, Locations, as_locations, cross_distances, expand
from .tps import map_latent
from .variogram import VariogramParams, empirical_dispersion


class NumericalError(RuntimeError):
    """Raised when a linear system is too ill-conditioned to solve."""


@dataclass(frozen=True)
class KrigingResult:
    predictions: np.ndarray  # (m,) or (m, n_rep)
    variances: np.ndarray  # (m,)


def _full(locs) -> np.ndarray:
    if isinstance(locs, ExpandedLocations):
        return locs.full
    if isinstance(locs, Locations):
        return locs.coords
    U = np.asarray(locs, dtype=float)
    return U[:, None] if U.ndim == 1 else U


def covariance(phi: VariogramParams, h):
    """Covariance implied by the variogram, without the nugget."""
    return phi.phi1 * np.exp(-np.asarray(h) / phi.phi2)


def _factor(S, jitter_rel=1e-10):
    s = S.shape[0]
    scale = np.trace(S) / s if s else 0.0
    for eps in (0.0, jitter_rel * scale):
        try:
            return cho_factor(S + eps * np.eye(s), lower=True)
        except np.linalg.LinAlgError:
            continue
    cond = np.linalg.cond(S)
    raise NumericalError(f"kriging system is singular (condition number {cond:.3e})")


def _solve_ok(S, c0, ordinary):
    """Weights for targets; returns (weights (s, m), lagrange (m,) or None)."""
    s = S.shape[0]
    if not ordinary:
        return cho_solve(_factor(S), c0), None
    A = np.zeros((s + 1, s + 1))
    A[:s, :s] = S
    A[:s, s] = A[s, :s] = 1.0
    rhs = np.vstack([c0, np.ones((1, c0.shape[1]))])
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"ordinary kriging system is singular: {exc}") from exc
    return sol[:s], sol[s]


def krige(train, y, phi: VariogramParams, targets, ordinary: bool = False) -> KrigingResult:
    """Kriging prediction at ``targets`` from observations ``y`` at ``train``.

    Simple kriging with known zero mean by default. The covariance is
    ``phi1 * exp(-h / phi2)`` with the nugget ``phi3`` on the training
    diagonal only. ``y`` may hold several replicates as columns; ``NaN``
    entries are dropped per replicate.
    """
    U = _full(train)
    T = _full(targets)
    if U.shape[1] != T.shape[1]:
        raise ValueError(f"training has {U.shape[1]} coordinates, targets {T.shape[1]}")
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    Y = y[:, None] if single else y
    if Y.shape[0] != U.shape[0]:
        raise ValueError(f"{Y.shape[0]} observations for {U.shape[0]} training sites")
    S = covariance(phi, cross_distances(U, U))
    S[np.diag_indices_from(S)] += phi.phi3
    c0 = covariance(phi, cross_distances(U, T))
    c00 = phi.phi1 + phi.phi3

    lam, mu = _solve_ok(S, c0, ordinary)
    var = c00 - np.einsum("ij,ij->j", lam, c0)
    if mu is not None:
        var = var - mu
    var = np.maximum(var, 0.0)

    present = ~np.isnan(Y)
    if present.all():
        preds = lam.T @ Y
    else:
        # one solve per distinct missing-data pattern
        preds = np.full((T.shape[0], Y.shape[1]), np.nan)
        patterns, inverse = np.unique(present.T, axis=0, return_inverse=True)
        inverse = np.asarray(inverse).ravel()
        for p_idx, mask in enumerate(patterns):
            if not mask.any():
                continue
            cols = np.flatnonzero(inverse == p_idx)
            lam_m, _ = _solve_ok(S[np.ix_(mask, mask)], c0[mask], ordinary)
            preds[:, cols] = lam_m.T @ Y[np.ix_(mask, cols)]
    return KrigingResult(preds[:, 0] if single else preds, var)


def predict_new_sites(X_train, y, solution, latent_map, X_new, ordinary: bool = False) -> KrigingResult:
    """Krige at new geographic sites through the learned expansion.

    Training sites use the smoothed latents ``f(X_train)``; new sites use
    ``f(X_new)``.
    """
    Xt = as_locations(X_train).coords
    Xn = np.atleast_2d(np.asarray(X_new.coords if isinstance(X_new, Locations) else X_new, dtype=float))
    train = np.hstack([Xt, latent_map.Z_smoothed])
    targets = np.hstack([Xn, latent_map(Xn)])
    return krige(train, y, solution.phi, targets, ordinary)


# ---------------------------------------------------------------------------
# cross-validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CvGrid:
    lambda1_values: np.ndarray
    lambda2_values: np.ndarray
    rmse: np.ndarray  # pooled over folds, (n1, n2)
    fold_rmse: np.ndarray  # (n_folds, n1, n2)
    n_failures: np.ndarray  # (n_folds, n1, n2)
    folds: tuple
    k: int
    seed: int

    @property
    def argmin(self):
        r = np.where(np.isfinite(self.rmse), self.rmse, np.inf)
        i, j = np.unravel_index(int(np.argmin(r)), r.shape)
        return float(self.lambda1_values[i]), float(self.lambda2_values[j]), float(self.rmse[i, j])


def make_folds(s: int, k: int, seed: int):
    """Random partition of ``range(s)`` into groups of (at most) ``k`` sites."""
    if not 1 <= k < s:
        raise ValueError(f"need 1 <= k < s, got k={k}, s={s}")
    if s - k < 3:
        raise ValueError(f"leave-{k}-out leaves only {s - k} training sites; need at least 3")
    perm = np.random.default_rng(seed).permutation(s)
    n_folds = -(-s // k)
    return tuple(np.sort(f) for f in np.array_split(perm, n_folds))


def _fold_job(args):
    Xc, values, test, lambda1_values, lambda2_values, cfg, units, ordinary = args
    s = Xc.shape[0]
    train = np.setdiff1d(np.arange(s), test)
    Xtr, Xte = Xc[train], Xc[test]
    ytr, yte = values[train], values[test]
    n1, n2 = len(lambda1_values), len(lambda2_values)
    sse = np.zeros((n1, n2))
    cnt = np.zeros((n1, n2))
    fail = np.zeros((n1, n2), dtype=int)
    obs = ~np.isnan(yte)
    try:
        disp = empirical_dispersion(ytr)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            path = expansion_path(Xtr, disp, cfg)
    except (ValueError, np.linalg.LinAlgError, NumericalError):
        fail[:] = 1
        return sse, cnt, fail
    for i, lam1 in enumerate(lambda1_values):
        try:
            sol = select_from_path(Xtr, disp, path, lam1, cfg)
        except (ValueError, np.linalg.LinAlgError):
            fail[i] = 1
            continue
        for j, lam2 in enumerate(lambda2_values):
            try:
                lm = map_latent(Xtr, sol, lam2, units)
                pred = predict_new_sites(Xtr, ytr, sol, lm, Xte, ordinary).predictions
            except (ValueError, np.linalg.LinAlgError, NumericalError):
                fail[i, j] = 1
                continue
            err = np.where(obs, pred - np.nan_to_num(yte), 0.0)
            sse[i, j] = float(np.sum(err * err))
            cnt[i, j] = float(obs.sum())
    return sse, cnt, fail


def cross_validate(X, values, lambda1_values, lambda2_values, k: int = 10, seed: int = 0,
                   cfg: ExpansionConfig = ExpansionConfig(), lambda2_units: str = "raw",
                   jobs: int = 1, ordinary: bool = False) -> CvGrid:
    """Leave-``k``-out prediction RMSE over a ``lambda1 x lambda2`` grid.

    Each fold recomputes dispersions from its held-in sites, learns one
    budget path and reuses it for every ``lambda1``; held-out sites are
    predicted for every replicate and errors are pooled over all held-out
    site-replicate pairs.
    """
    Xc = as_locations(X).coords
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    lambda1_values = np.asarray(lambda1_values, dtype=float)
    lambda2_values = np.asarray(lambda2_values, dtype=float)
    folds = make_folds(Xc.shape[0], k, seed)
    cfg = replace(cfg, seed=seed)
    jobs_args = [(Xc, values, f, lambda1_values, lambda2_values, cfg, lambda2_units, ordinary)
                 for f in folds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_fold_job, jobs_args))
    else:
        results = [_fold_job(a) for a in jobs_args]
    sse = np.stack([r[0] for r in results])
    cnt = np.stack([r[1] for r in results])
    fail = np.stack([r[2] for r in results])
    with np.errstate(invalid="ignore", divide="ignore"):
        fold_rmse = np.sqrt(sse / cnt)
        pooled = np.sqrt(sse.sum(axis=0) / cnt.sum(axis=0))
    return CvGrid(lambda1_values, lambda2_values, pooled, fold_rmse, fail, folds, k, seed)


def geographic_cv_rmse(X, values, k: int = 10, seed: int = 0, ordinary: bool = False) -> float:
    """Pooled leave-``k``-out RMSE of plain stationary kriging on the plane."""
    from .variogram import default_init, fit_variogram_pairs
    from .geo import pairwise_distances, upper_pairs

    Xc = as_locations(X).coords
    values = np.asarray(values, dtype=float)
    sse = cnt = 0.0
    for test in make_folds(Xc.shape[0], k, seed):
        train = np.setdiff1d(np.arange(Xc.shape[0]), test)
        disp = empirical_dispersion(values[train])
        D = pairwise_distances(Xc[train])
        iu = upper_pairs(train.size)
        phi = fit_variogram_pairs(D[iu], disp.v[iu], default_init(disp.v, D)).params
        pred = krige(Xc[train], values[train], phi, Xc[test], ordinary).predictions
        obs = ~np.isnan(values[test])
        err = np.where(obs, pred - np.nan_to_num(values[test]), 0.0)
        sse += float(np.sum(err * err))
        cnt += float(obs.sum())
    return float(np.sqrt(sse / cnt))
