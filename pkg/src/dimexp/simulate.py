"""Gaussian-process simulation and synthetic site layouts.

Random streams: every function takes an integer ``seed`` and builds its own
``numpy.random.default_rng(seed)``. Pipelines that need several streams
derive them with ``numpy.random.SeedSequence(seed).spawn(n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geo import ExpandedLocations, Locations, cross_distances, expand


@dataclass(frozen=True)
class CovarianceSpec:
    """How to build the site covariance matrix.

    kind:
      ``"exponential"``  sill * exp(-h / range) (+ nugget on the diagonal),
      the covariance matching an exponential variogram;
      ``"product-exponential"``  exp(-sum_k |u_ik - u_jk| / range), the
      separable covariance of the motivating plane example;
      ``"custom-matrix"``  ``params["matrix"]`` used as-is.
    """

    kind: str = "exponential"
    params: dict = field(default_factory=dict)

    def matrix(self, locs) -> np.ndarray:
        U = _coords(locs)
        if self.kind == "exponential":
            sill = self.params.get("sill", 1.0)
            rng = self.params.get("range", 1.0)
            nugget = self.params.get("nugget", 0.0)
            C = sill * np.exp(-cross_distances(U, U) / rng)
            C[np.diag_indices_from(C)] += nugget
            return C
        if self.kind == "product-exponential":
            rng = self.params.get("range", 1.0)
            L1 = np.abs(U[:, None, :] - U[None, :, :]).sum(axis=2)
            return np.exp(-L1 / rng)
        if self.kind == "custom-matrix":
            C = np.array(self.params["matrix"], dtype=float)
            if C.shape != (U.shape[0], U.shape[0]):
                raise ValueError(f"custom matrix has shape {C.shape}, expected {(U.shape[0],) * 2}")
            return C
        raise ValueError(f"unknown covariance kind {self.kind!r}")


def _coords(locs) -> np.ndarray:
    if isinstance(locs, ExpandedLocations):
        return locs.full
    if isinstance(locs, Locations):
        return locs.coords
    U = np.asarray(locs, dtype=float)
    return U[:, None] if U.ndim == 1 else U


def symmetric_factor(C: np.ndarray, jitter_rel: float = 1e-8) -> np.ndarray:
    """Return ``L`` with ``L @ L.T ~= C``.

    Tries Cholesky, then Cholesky with diagonal jitter up to
    ``jitter_rel * trace / s``, then an eigendecomposition with negative
    eigenvalues inside the same budget clipped to zero.
    """
    C = np.asarray(C, dtype=float)
    if not np.allclose(C, C.T, rtol=0, atol=1e-12 * max(1.0, np.abs(C).max())):
        raise ValueError("covariance matrix is not symmetric")
    C = 0.5 * (C + C.T)
    s = C.shape[0]
    budget = jitter_rel * max(np.trace(C), 0.0) / s
    if not np.any(C):
        return np.zeros_like(C)
    for eps in (0.0, budget):
        try:
            return np.linalg.cholesky(C + eps * np.eye(s))
        except np.linalg.LinAlgError:
            pass
    w, V = np.linalg.eigh(C)
    if w.min() < -budget:
        raise ValueError(
            f"covariance is not positive semidefinite: most negative eigenvalue {w.min():.3e} "
            f"exceeds jitter budget {budget:.3e}"
        )
    return V * np.sqrt(np.clip(w, 0.0, None))


def simulate_gp(cov, locs, n_realizations: int, seed: int = 0) -> np.ndarray:
    """Draw mean-zero Gaussian-process realizations.

    Returns an ``(s, n_realizations)`` array. ``cov`` is a
    :class:`CovarianceSpec` or an explicit covariance matrix.
    """
    if n_realizations < 1:
        raise ValueError("n_realizations must be >= 1")
    C = cov.matrix(locs) if isinstance(cov, CovarianceSpec) else np.asarray(cov, dtype=float)
    L = symmetric_factor(C)
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((C.shape[0], n_realizations))
    return L @ eps


def ellipsoid_locations(s: int = 100, semi_axes=(1.0, 1.0, 0.5), seed: int = 0) -> Locations:
    """``s`` points on the ellipsoid x^2/a^2 + y^2/b^2 + z^2/c^2 = 1 with a == b.

    Points are stratified in height (equal-area bands on the unit sphere)
    with golden-angle azimuths; the seed adds a random jitter inside each
    band and a random azimuthal rotation.
    """
    a, b, c = (float(v) for v in semi_axes)
    if s < 4:
        raise ValueError("need at least 4 points")
    if min(a, b, c) <= 0:
        raise ValueError("semi-axes must be positive")
    if a != b:
        raise ValueError("first two semi-axes must be equal so the (x, y) projection is a disk")
    rng = np.random.default_rng(seed)
    u = (np.arange(s) + rng.uniform(0.05, 0.95, s)) / s
    cos_t = 1.0 - 2.0 * u
    sin_t = np.sqrt(np.clip(1.0 - cos_t**2, 0.0, None))
    psi = np.arange(s) * np.pi * (3.0 - np.sqrt(5.0)) + rng.uniform(0, 2 * np.pi)
    xyz = np.column_stack([a * sin_t * np.cos(psi), b * sin_t * np.sin(psi), c * cos_t])
    # exact projection back onto the surface
    r = np.sqrt((xyz[:, 0] / a) ** 2 + (xyz[:, 1] / b) ** 2 + (xyz[:, 2] / c) ** 2)
    xyz = xyz / r[:, None]
    return Locations(xyz, tuple(f"s{i:03d}" for i in range(s)))


def perrin_reduced_cov(xi, xj):
    """Covariance of ``Y'(x) = Y([x, x^2])`` for ``cov = exp(-|dx| - |dz|)``.

    Direct substitution of ``z = x^2`` gives
    ``exp(-|xi - xj| * (1 + |xi + xj|))``.
    """
    xi = np.asarray(xi, dtype=float)
    xj = np.asarray(xj, dtype=float)
    return np.exp(-np.abs(xi - xj) * (1.0 + np.abs(xi + xj)))


def perrin_reduced_matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    return perrin_reduced_cov(x[:, None], x[None, :])


def stationary_locations(s: int, seed: int = 0, extent: float = 1.0) -> Locations:
    """Uniform random sites on a square, for stationary control fields."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-extent, extent, size=(s, 2))
    return Locations(X, tuple(f"s{i:03d}" for i in range(s)))


def cities_scenario(s: int, seed: int = 0, n_cities: int = 2, city_fraction: float = 0.3,
                    lift: float = 1.5):
    """Sites where "urban" sites share a hidden extra coordinate.

    Returns ``(locations, hidden_latent)``: urban sites (a fraction
    ``city_fraction``, clustered around ``n_cities`` centres) sit at latent
    height 0, rural sites at ``lift``. A stationary field in the hidden 3-D
    space looks nonstationary on the plane, with distant cities more alike
    than their separation suggests.
    """
    rng = np.random.default_rng(seed)
    n_urban = int(round(city_fraction * s))
    centres = rng.uniform(-0.8, 0.8, size=(n_cities, 2))
    centres[:, 0] = np.linspace(-0.7, 0.7, n_cities)
    lab = np.arange(n_urban) % n_cities
    urban = centres[lab] + 0.08 * rng.standard_normal((n_urban, 2))
    rural = rng.uniform(-1, 1, size=(s - n_urban, 2))
    X = np.vstack([urban, rural])
    z = np.concatenate([np.zeros(n_urban), np.full(s - n_urban, lift)])
    return Locations(X, tuple(f"s{i:03d}" for i in range(s))), z[:, None]


def ellipsoid_scenario(s: int = 100, n: int = 1000, seed: int = 0, semi_axes=(1.0, 1.0, 0.5),
                       sill: float = 1.0, range_: float = 1.0):
    """Sites on an ellipsoid, a stationary exponential field in 3-D, observed on the disk.

    Returns ``(planar_locations, hidden_height, values)``.
    """
    ss = np.random.SeedSequence(seed).spawn(2)
    loc_seed = int(ss[0].generate_state(1)[0])
    field_seed = int(ss[1].generate_state(1)[0])
    L3 = ellipsoid_locations(s, semi_axes, loc_seed)
    spec = CovarianceSpec("exponential", {"sill": sill, "range": range_})
    Y = simulate_gp(spec, L3, n, field_seed)
    X = Locations(L3.coords[:, :2], L3.site_ids)
    return X, L3.coords[:, 2:], Y


def latent_scenario(X: Locations, Z, n: int, seed: int = 0, sill: float = 1.0,
                    range_: float = 1.0, nugget: float = 0.0):
    """Simulate a stationary exponential field in ``[X, Z]``; returns values."""
    spec = CovarianceSpec("exponential", {"sill": sill, "range": range_, "nugget": nugget})
    return simulate_gp(spec, expand(X, Z), n, seed)
