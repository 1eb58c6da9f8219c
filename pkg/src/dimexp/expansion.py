"""Learning sparse latent coordinates in which a stationary variogram fits.

The learner minimizes

    sum_{i<j} (v_ij - gamma_phi(d_ij([X, Z])))^2 + lambda1 * sum_k ||Z[:, k]||

over ``phi`` and ``Z``. ``Z = 0`` is always a critical point of the misfit
(every pair term is even in ``z_i - z_j``) and therefore a local minimum of
the penalized objective, so a penalty-form solver started at zero never
moves. The solver instead:

1. runs budget-constrained projected gradient (``sum_k ||Z_k|| <= M``) over
   an increasing path of budgets, warm-started, from a tiny seeded
   perturbation of ``Z = 0``;
2. picks the path point with the lowest penalized objective for the
   requested ``lambda1`` (``Z = 0`` with the stationary fit is a candidate);
3. polishes that point with penalty-form proximal gradient steps, which
   makes the group-norm multiplier equal ``lambda1`` on active columns.

``phi`` is refit (exactly, in ``phi1``/``phi3``) before every ``Z`` step.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.optimize import minimize_scalar

from .geo import as_locations, squared_distances, upper_pairs
from .variogram import (
    DispersionMatrix,
    VariogramParams,
    _profile,
    _profile_sse,
    evaluate_variogram,
    fit_variogram_pairs,
    default_init,
    pair_sse,
    variogram_d_dh,
)


@dataclass(frozen=True)
class ExpansionConfig:
    p_max: int = 3
    lambda1: float = 0.5
    max_iters: int = 300
    step_size: float | None = None  # initial step; None -> scaled to the data
    tol: float = 1e-8
    seed: int = 0
    norm: str = "group"  # "group": Euclidean column norms, "l1": entrywise
    projection: str = "ball"  # "ball" or "recurrence" (always fills the budget)
    n_budgets: int = 14
    budget_range: tuple = (1e-3, 2.0)  # in units of sqrt(s) * mean inter-site distance
    polish: bool = True
    polish_iters: int = 400

    def __post_init__(self):
        if self.p_max < 1:
            raise ValueError("p_max must be >= 1")
        if not self.lambda1 >= 0:
            raise ValueError("lambda1 must be >= 0")
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step_size must be > 0")
        if self.norm not in ("group", "l1"):
            raise ValueError(f"unknown norm {self.norm!r}")
        if self.projection not in ("ball", "recurrence"):
            raise ValueError(f"unknown projection {self.projection!r}")
        if self.max_iters < 1 or self.n_budgets < 1:
            raise ValueError("max_iters and n_budgets must be >= 1")


@dataclass(frozen=True)
class ExpansionSolution:
    Z: np.ndarray
    phi: VariogramParams
    group_norms: np.ndarray
    active_dims: tuple
    objective_trace: tuple
    lambda1: float
    M: float
    misfit: float
    multiplier: float = 0.0
    converged: bool = True

    @property
    def n_active(self) -> int:
        return len(self.active_dims)

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]

    def to_dict(self) -> dict:
        return {
            "phi": list(self.phi.as_tuple()),
            "lambda1": self.lambda1,
            "M": self.M,
            "multiplier": self.multiplier,
            "misfit": self.misfit,
            "active_dims": list(self.active_dims),
            "group_norms": self.group_norms.tolist(),
            "shape": list(self.Z.shape),
            "Z": self.Z.ravel().tolist(),
            "objective_trace": list(self.objective_trace),
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExpansionSolution":
        Z = np.array(d["Z"], dtype=float).reshape(d["shape"])
        return cls(
            Z=Z,
            phi=VariogramParams(*d["phi"]),
            group_norms=np.array(d["group_norms"], dtype=float),
            active_dims=tuple(int(k) for k in d["active_dims"]),
            objective_trace=tuple(float(v) for v in d["objective_trace"]),
            lambda1=float(d["lambda1"]),
            M=float(d["M"]),
            misfit=float(d["misfit"]),
            multiplier=float(d.get("multiplier", 0.0)),
            converged=bool(d["converged"]),
        )


# ---------------------------------------------------------------------------
# objective and gradient
# ---------------------------------------------------------------------------

def _disp_matrix(disp) -> np.ndarray:
    return disp.v if isinstance(disp, DispersionMatrix) else np.asarray(disp, dtype=float)


def _coords(X) -> np.ndarray:
    return as_locations(X).coords


def _latent(Z, s) -> np.ndarray:
    Z = np.zeros((s, 0)) if Z is None else np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.shape[0] != s:
        raise ValueError(f"Z has {Z.shape[0]} rows, expected {s}")
    return Z


def penalty(Z, norm: str = "group") -> float:
    Z = np.asarray(Z, dtype=float)
    if norm == "group":
        return float(np.linalg.norm(Z, axis=0).sum())
    return float(np.abs(Z).sum())


def misfit(phi: VariogramParams, Z, X, disp) -> float:
    """Unpenalized pair misfit ``sum_{i<j} (v_ij - gamma(d_ij))^2``."""
    Xc = _coords(X)
    v = _disp_matrix(disp)
    if v.shape != (Xc.shape[0],) * 2:
        raise ValueError(f"dispersions {v.shape} do not match {Xc.shape[0]} sites")
    U = np.hstack([Xc, _latent(Z, Xc.shape[0])])
    iu = upper_pairs(Xc.shape[0])
    h = np.sqrt(squared_distances(U)[iu])
    return pair_sse(phi, h, v[iu])


def objective(phi: VariogramParams, Z, X, disp, lambda1: float, norm: str = "group") -> float:
    """Penalized objective: pair misfit plus ``lambda1`` times the column-norm sum."""
    Z = _latent(Z, _coords(X).shape[0])
    return misfit(phi, Z, X, disp) + lambda1 * penalty(Z, norm)


def _weights(phi, D, v):
    # W_ij = 2 (gamma - v) gamma' / d_ij, zero where d_ij == 0
    pos = D > 0
    W = np.zeros_like(D)
    Dp = D[pos]
    W[pos] = 2.0 * (evaluate_variogram(phi, Dp) - v[pos]) * variogram_d_dh(phi, Dp) / Dp
    n_coincident = int((~pos).sum() - D.shape[0]) // 2
    return W, n_coincident


def misfit_gradient(phi: VariogramParams, U, disp, return_coincident: bool = False):
    """Gradient of the misfit with respect to every coordinate of ``U``."""
    U = np.asarray(U, dtype=float)
    v = _disp_matrix(disp)
    D = np.sqrt(squared_distances(U))
    np.fill_diagonal(D, 0.0)
    W, n_co = _weights(phi, D, v)
    G = W.sum(axis=1)[:, None] * U - W @ U
    return (G, n_co) if return_coincident else G


def misfit_gradient_Z(phi: VariogramParams, Z, X, disp, return_coincident: bool = False):
    """Gradient of the misfit with respect to the latent coordinates ``Z``.

    Column ``k``, row ``i``:
    ``sum_{j != i} 2 (gamma(d_ij) - v_ij) gamma'(d_ij) (Z_ik - Z_jk) / d_ij``.
    Coincident expanded points contribute zero (subgradient choice); their
    count is returned when ``return_coincident`` is set.
    """
    Xc = _coords(X)
    Z = _latent(Z, Xc.shape[0])
    v = _disp_matrix(disp)
    D = np.sqrt(squared_distances(np.hstack([Xc, Z])))
    np.fill_diagonal(D, 0.0)
    W, n_co = _weights(phi, D, v)
    G = W.sum(axis=1)[:, None] * Z - W @ Z
    return (G, n_co) if return_coincident else G


# ---------------------------------------------------------------------------
# projections and proximal maps
# ---------------------------------------------------------------------------

def _norm_targets(norms: np.ndarray, M: float) -> np.ndarray:
    """Iterate the shrink-and-redistribute recurrence on column norms.

    Starting from every nonzero column, each active column gets target
    ``||u_j|| + (M - sum_active ||u||) / |active|``; columns whose target is
    not positive leave the active set, until the set is stable.
    """
    active = norms > 0
    targets = np.zeros_like(norms)
    while active.any():
        shift = (M - norms[active].sum()) / active.sum()
        targets = np.where(active, norms + shift, 0.0)
        keep = targets > 0
        if np.array_equal(keep, active):
            break
        active = keep
    return np.where(active, targets, 0.0)


def _enforce_budget(out: np.ndarray, norms_fn, M: float) -> np.ndarray:
    # rounding can leave sum of norms a few ulp above M
    total = norms_fn(out)
    while total > M:
        out = out * (M / total) * (1 - 4 * np.finfo(float).eps)
        total = norms_fn(out)
    return out


def group_project(U, M: float, exact_recurrence: bool = False) -> np.ndarray:
    """Project columns of ``U`` onto ``{sum_j ||U_j|| <= M}``.

    With ``exact_recurrence=False`` (default) inputs already inside the set
    are returned unchanged, which is the Euclidean projection onto the
    ball; otherwise the column norms are set by the shrink-and-redistribute
    recurrence and every column is rescaled to its target. With
    ``exact_recurrence=True`` the recurrence is always applied, so the
    output norms sum to ``M`` whenever ``U`` has a nonzero column.
    All-zero columns stay zero.
    """
    U = np.asarray(U, dtype=float)
    if M < 0:
        raise ValueError("budget M must be >= 0")
    if M == 0:
        return np.zeros_like(U)
    norms = np.linalg.norm(U, axis=0)
    if not exact_recurrence and norms.sum() <= M:
        return U.copy()
    targets = _norm_targets(norms, M)
    scale = np.divide(targets, norms, out=np.zeros_like(norms), where=norms > 0)
    out = U * scale
    return _enforce_budget(out, lambda A: np.linalg.norm(A, axis=0).sum(), M)


def l1_project(U, M: float) -> np.ndarray:
    """Euclidean projection onto the entrywise l1 ball of radius ``M``."""
    U = np.asarray(U, dtype=float)
    if M < 0:
        raise ValueError("budget M must be >= 0")
    a = np.abs(U).ravel()
    if a.sum() <= M:
        return U.copy()
    if M == 0:
        return np.zeros_like(U)
    srt = np.sort(a)[::-1]
    css = np.cumsum(srt)
    rho = np.nonzero(srt * np.arange(1, a.size + 1) > css - M)[0][-1]
    theta = (css[rho] - M) / (rho + 1.0)
    out = np.sign(U) * np.maximum(np.abs(U) - theta, 0.0)
    return _enforce_budget(out, lambda A: np.abs(A).sum(), M)


def group_soft_threshold(U, t: float) -> np.ndarray:
    """Proximal map of ``t * sum_j ||U_j||``."""
    U = np.asarray(U, dtype=float)
    norms = np.linalg.norm(U, axis=0)
    scale = np.divide(np.maximum(norms - t, 0.0), norms, out=np.zeros_like(norms),
                      where=norms > 0)
    return U * scale


def soft_threshold(U, t: float) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    return np.sign(U) * np.maximum(np.abs(U) - t, 0.0)


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------

class _Problem:
    """Cached pair data for one ``(X, disp)``."""

    def __init__(self, X, disp, norm="group"):
        # a raw (s, 0) array is allowed: all geometry then lives in Z
        self.X = X if isinstance(X, np.ndarray) and X.ndim == 2 else _coords(X)
        self.v = _disp_matrix(disp)
        s = self.X.shape[0]
        if self.v.shape != (s, s):
            raise ValueError(f"dispersions {self.v.shape} do not match {s} sites")
        if s < 2:
            raise ValueError("need at least 2 sites")
        self.s = s
        self.iu = upper_pairs(s)
        self.sqX = squared_distances(self.X)
        self.vp = self.v[self.iu]
        self.norm = norm
        dX = np.sqrt(self.sqX[self.iu])
        self.mean_dist = float(dX.mean()) if dX.size and dX.any() else 1.0

    def dist_pairs(self, Z):
        if Z.shape[1] == 0 or not Z.any():
            return np.sqrt(self.sqX[self.iu])
        return np.sqrt(self.sqX[self.iu] + squared_distances(Z)[self.iu])

    def misfit(self, phi, Z):
        return pair_sse(phi, self.dist_pairs(Z), self.vp)

    def grad(self, phi, Z):
        D = np.sqrt(self.sqX + squared_distances(Z))
        np.fill_diagonal(D, 0.0)
        W, _ = _weights(phi, D, self.v)
        return W.sum(axis=1)[:, None] * Z - W @ Z

    def penalty(self, Z):
        return penalty(Z, self.norm)

    def stationary_fit(self):
        D = np.sqrt(self.sqX)
        init = default_init(self.v, D)
        return fit_variogram_pairs(D[self.iu], self.vp, init)

    def refit(self, phi, Z):
        """Refit ``phi`` at fixed ``Z``, searching log-range near the current value."""
        h = self.dist_pairs(Z)
        y = self.vp
        t0 = np.log(phi.phi2)
        lo, hi = t0 - 1.0, t0 + 1.0
        grid = np.linspace(lo, hi, 9)
        vals = [_profile(t, h, y)[0] for t in grid]
        k = int(np.argmin(vals))
        if k in (0, len(grid) - 1):
            fit = fit_variogram_pairs(h, y, phi)
            return fit.params, fit.sse
        res = minimize_scalar(_profile_sse, bounds=(grid[k - 1], grid[k + 1]), args=(h, y),
                              method="bounded", options={"xatol": 1e-9})
        sse, a, b = _profile(res.x, h, y)
        sse_old = pair_sse(phi, h, y)
        if sse_old <= sse:
            return phi, sse_old
        return VariogramParams(a, float(np.exp(res.x)), b), sse


def _budget_solve(prob, Z, phi, M, cfg, step):
    """Projected gradient on the misfit subject to the column-norm budget ``M``."""
    if cfg.norm == "group":
        proj = lambda U: group_project(U, M, exact_recurrence=cfg.projection == "recurrence")
    else:
        proj = lambda U: l1_project(U, M)
    Z = proj(Z)
    phi, f = prob.refit(phi, Z)
    trace = [f]
    converged = False
    for _ in range(cfg.max_iters):
        phi, f = prob.refit(phi, Z)
        g = prob.grad(phi, Z)
        accepted = False
        for _ in range(60):
            Zn = proj(Z - step * g)
            fn = prob.misfit(phi, Zn)
            if fn < f - 1e-4 * np.sum(g * (Z - Zn)) or (fn < f and np.sum(g * (Z - Zn)) <= 0):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            converged = True
            break
        dec = f - fn
        Z, f = Zn, fn
        trace.append(f)
        step *= 2.0
        if dec <= cfg.tol * max(f, 1e-300) + 1e-300:
            converged = True
            break
    phi, f = prob.refit(phi, Z)
    trace.append(f)
    return Z, phi, f, trace, converged, step


def _polish(prob, Z, phi, lam, cfg, step):
    """Proximal gradient on the penalized objective, from a warm start."""
    prox = group_soft_threshold if cfg.norm == "group" else soft_threshold
    phi, f = prob.refit(phi, Z)
    F = f + lam * prob.penalty(Z)
    trace = [F]
    converged = False
    for _ in range(cfg.polish_iters):
        phi, f = prob.refit(phi, Z)
        F = f + lam * prob.penalty(Z)
        g = prob.grad(phi, Z)
        accepted = False
        for _ in range(60):
            Zn = prox(Z - step * g, step * lam)
            fn = prob.misfit(phi, Zn)
            Fn = fn + lam * prob.penalty(Zn)
            # sufficient-decrease test for proximal steps
            dZ = Zn - Z
            quad = f + np.sum(g * dZ) + np.sum(dZ * dZ) / (2 * step)
            if fn <= quad and Fn <= F:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            converged = True
            break
        dec = F - Fn
        Z = Zn
        trace.append(Fn)
        step *= 2.0
        if dec <= cfg.tol * max(Fn, 1e-300) + 1e-300:
            converged = True
            break
    phi, f = prob.refit(phi, Z)
    trace.append(f + lam * prob.penalty(Z))
    return Z, phi, f, trace, converged


def _multiplier(prob, phi, Z):
    """Estimate of the constraint multiplier at ``Z``: ``<-grad, Z> / penalty(Z)``."""
    P = prob.penalty(Z)
    if P == 0:
        return 0.0
    g = prob.grad(phi, Z)
    return float(max(-np.sum(g * Z) / P, 0.0))


@dataclass
class PathPoint:
    M: float
    Z: np.ndarray
    phi: VariogramParams
    misfit: float
    penalty: float
    multiplier: float
    trace: list = field(default_factory=list)
    converged: bool = True


def expansion_path(X, disp, cfg: ExpansionConfig = ExpansionConfig(), budgets=None):
    """Warm-started budget path. The first point is always ``Z = 0``."""
    prob = _Problem(X, disp, cfg.norm)
    s, p = prob.s, cfg.p_max
    if not np.any(prob.vp):
        phi = VariogramParams(0.0, max(prob.mean_dist, 1e-12), 0.0)
        return [PathPoint(0.0, np.zeros((s, p)), phi, 0.0, 0.0, 0.0, [0.0])]
    fit0 = prob.stationary_fit()
    Z0 = np.zeros((s, p))
    path = [PathPoint(0.0, Z0, fit0.params, fit0.sse, 0.0, 0.0, [fit0.sse], fit0.converged)]
    if budgets is None:
        unit = np.sqrt(s) * prob.mean_dist
        budgets = unit * np.geomspace(cfg.budget_range[0], cfg.budget_range[1], cfg.n_budgets)
    budgets = np.sort(np.asarray(budgets, dtype=float))
    rng = np.random.default_rng(cfg.seed)
    Z = 1e-6 * prob.mean_dist * rng.standard_normal((s, p))
    phi = fit0.params
    step = cfg.step_size if cfg.step_size is not None else 0.1 * prob.mean_dist / s
    for M in budgets:
        Z, phi, f, trace, conv, step = _budget_solve(prob, Z, phi, M, cfg, step)
        path.append(PathPoint(float(M), Z.copy(), phi, f, prob.penalty(Z),
                              _multiplier(prob, phi, Z), trace, conv))
    return path


def _column_summary(Z, norm):
    if norm == "group":
        norms = np.linalg.norm(Z, axis=0)
    else:
        norms = np.abs(Z).sum(axis=0)
    active = tuple(int(k) for k in np.flatnonzero(norms > 0))
    return norms, active


def select_from_path(X, disp, path, lambda1: float, cfg: ExpansionConfig = ExpansionConfig()):
    """Best path point for ``lambda1``, optionally polished in penalty form."""
    prob = _Problem(X, disp, cfg.norm)
    J = [pt.misfit + lambda1 * pt.penalty for pt in path]
    k = int(np.argmin(J))
    pt = path[k]
    Z, phi, f, trace, conv = pt.Z, pt.phi, pt.misfit, [J[k]], pt.converged
    if k > 0 and cfg.polish and lambda1 > 0:
        step = cfg.step_size if cfg.step_size is not None else 0.1 * prob.mean_dist / prob.s
        Zp, phip, fp, tr, convp = _polish(prob, Z, phi, lambda1, cfg, step)
        if fp + lambda1 * prob.penalty(Zp) <= J[k]:
            Z, phi, f, conv = Zp, phip, fp, convp
            trace = [J[k]] + tr[1:]
    norms, active = _column_summary(Z, cfg.norm)
    if not active:
        # collapse to the exact stationary fit so Z = 0 matches plain kriging
        Z = np.zeros_like(Z)
        phi, f = path[0].phi, path[0].misfit
        trace = [path[0].misfit]
        norms = np.zeros(Z.shape[1])
    trace = list(np.minimum.accumulate(trace))
    mult = _multiplier(prob, phi, Z)
    return ExpansionSolution(
        Z=Z, phi=phi, group_norms=norms, active_dims=active,
        objective_trace=tuple(float(t) for t in trace), lambda1=float(lambda1),
        M=float(prob.penalty(Z)), misfit=float(f), multiplier=float(mult),
        converged=bool(conv),
    )


def learn_expansion(X, disp, cfg: ExpansionConfig = ExpansionConfig(), path=None) -> ExpansionSolution:
    """Learn latent coordinates ``Z`` (``s x p_max``) and variogram parameters.

    Pass a precomputed ``path`` (from :func:`expansion_path` with the same
    data) to reuse it across several ``lambda1`` values.
    """
    if path is None:
        path = expansion_path(X, disp, cfg)
    sol = select_from_path(X, disp, path, cfg.lambda1, cfg)
    if not sol.converged:
        warnings.warn("expansion solver hit its iteration limit; returning best iterate",
                      RuntimeWarning, stacklevel=2)
    return sol


def sweep_lambda1(X, disp, lambda1_values, cfg: ExpansionConfig = ExpansionConfig(),
                  rel_tol: float = 0.05, path=None):
    """Solve along a ``lambda1`` grid and pick the sparsest adequate fit.

    The selected value is the largest ``lambda1`` whose pair misfit is within
    a factor ``(1 + rel_tol)^2`` of the best misfit on the grid (pair RMSE
    within ``rel_tol``). Returns ``(selected_lambda1, solutions)`` with
    solutions ordered like ``lambda1_values``.
    """
    if path is None:
        path = expansion_path(X, disp, cfg)
    sols = [select_from_path(X, disp, path, float(lam), cfg) for lam in lambda1_values]
    best = min(s.misfit for s in sols)
    ok = [float(lam) for lam, s in zip(lambda1_values, sols) if s.misfit <= (1 + rel_tol) ** 2 * best]
    return max(ok), sols


def free_embedding(U0, disp, max_iters: int = 500, tol: float = 1e-9):
    """Metric least-squares scaling: move all coordinates to minimize the misfit.

    Returns ``(U, phi, misfit, converged)``; starts from ``U0``.
    """
    U0 = np.asarray(U0, dtype=float)
    s = U0.shape[0]
    prob = _Problem(np.zeros((s, 0)), disp)
    D0 = np.sqrt(squared_distances(U0))
    prob.mean_dist = float(D0[prob.iu].mean())
    fit = fit_variogram_pairs(D0[prob.iu], prob.vp, default_init(prob.v, D0))
    cfg = ExpansionConfig(max_iters=max_iters, tol=tol)
    U, phi, f, _, conv, _ = _budget_solve(prob, U0, fit.params, np.inf, cfg,
                                          0.1 * prob.mean_dist / s)
    return U, phi, f, conv


@dataclass(frozen=True)
class FitQuality:
    sse: float
    rmse_over_pairs: float
    n_active_dims: int


def fit_quality(phi: VariogramParams, Z, X, disp) -> FitQuality:
    Xc = _coords(X)
    Z = _latent(Z, Xc.shape[0])
    sse = misfit(phi, Z, X, disp)
    n_pairs = Xc.shape[0] * (Xc.shape[0] - 1) // 2
    n_active = int(np.count_nonzero(np.linalg.norm(Z, axis=0))) if Z.size else 0
    return FitQuality(float(sse), float(np.sqrt(sse / n_pairs)), n_active)


def config_dict(cfg: ExpansionConfig) -> dict:
    d = asdict(cfg)
    d["budget_range"] = list(cfg.budget_range)
    return d
