"""Site coordinates, latent augmentation and Euclidean distances."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Locations:
    """Geographic coordinates of ``s`` sites in ``d`` dimensions."""

    coords: np.ndarray
    site_ids: tuple = field(default=None)

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        if coords.ndim != 2:
            raise ValueError("coords must be a 2-D array (sites x dims)")
        s, d = coords.shape
        if s < 2 or d < 1:
            raise ValueError(f"need at least 2 sites and 1 dimension, got shape {coords.shape}")
        _check_finite(coords, self.site_ids)
        ids = self.site_ids
        if ids is None:
            ids = tuple(str(i) for i in range(s))
        ids = tuple(ids)
        if len(ids) != s:
            raise ValueError(f"{len(ids)} site ids for {s} sites")
        if len(set(ids)) != s:
            raise ValueError("site ids must be unique")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "site_ids", ids)

    @property
    def n_sites(self) -> int:
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    def subset(self, idx) -> "Locations":
        idx = np.asarray(idx)
        return Locations(self.coords[idx], tuple(self.site_ids[i] for i in idx))


@dataclass(frozen=True)
class ExpandedLocations:
    """Geographic coordinates augmented with ``p`` latent columns."""

    base: Locations
    latent: np.ndarray

    def __post_init__(self):
        Z = np.array(self.latent, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        if Z.ndim != 2 or Z.shape[0] != self.base.n_sites:
            raise ValueError(
                f"latent has shape {Z.shape}, expected ({self.base.n_sites}, p)"
            )
        _check_finite(Z, self.base.site_ids)
        Z.setflags(write=False)
        object.__setattr__(self, "latent", Z)

    @property
    def p(self) -> int:
        return self.latent.shape[1]

    @property
    def full(self) -> np.ndarray:
        return np.hstack([self.base.coords, self.latent])

    def project(self) -> np.ndarray:
        """First ``d`` columns, i.e. the untouched geographic coordinates."""
        return self.full[:, : self.base.dim]


def _check_finite(a, site_ids=None):
    bad = ~np.isfinite(a).all(axis=1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        name = site_ids[i] if site_ids is not None else i
        raise ValueError(f"non-finite coordinate at site {name!r} (row {i})")


def as_locations(X) -> Locations:
    return X if isinstance(X, Locations) else Locations(np.asarray(X, dtype=float))


def expand(X, Z=None) -> ExpandedLocations:
    """Concatenate geographic coordinates ``X`` with latent columns ``Z``.

    ``Z=None`` gives zero latent dimensions.
    """
    X = as_locations(X)
    if Z is None:
        Z = np.zeros((X.n_sites, 0))
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.shape[0] != X.n_sites:
        raise ValueError(f"Z has {Z.shape[0]} rows but X has {X.n_sites} sites")
    return ExpandedLocations(X, Z)


def squared_distances(U: np.ndarray) -> np.ndarray:
    # column-by-column accumulation: appending all-zero columns leaves the
    # result bit-identical, which the lambda1 -> inf special case relies on
    U = np.asarray(U, dtype=float)
    s = U.shape[0]
    out = np.zeros((s, s))
    for k in range(U.shape[1]):
        diff = U[:, k, None] - U[None, :, k]
        out += diff * diff
    return out


def pairwise_distances(locs) -> np.ndarray:
    """Euclidean distance matrix of the expanded (or plain) coordinates.

    Accepts :class:`ExpandedLocations`, :class:`Locations` or a raw array.
    """
    if isinstance(locs, ExpandedLocations):
        U = locs.full
    elif isinstance(locs, Locations):
        U = locs.coords
    else:
        U = np.asarray(locs, dtype=float)
        if U.ndim == 1:
            U = U[:, None]
        _check_finite(U)
    D = np.sqrt(squared_distances(U))
    np.fill_diagonal(D, 0.0)
    return D


def cross_distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Distances between rows of ``A`` (n x D) and rows of ``B`` (m x D)."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    out = np.zeros((A.shape[0], B.shape[0]))
    for k in range(A.shape[1]):
        diff = A[:, k, None] - B[None, :, k]
        out += diff * diff
    return np.sqrt(out)


def upper_pairs(s: int):
    """Row/column indices of the ``i < j`` pairs."""
    return np.triu_indices(s, k=1)
