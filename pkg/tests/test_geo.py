import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dimexp.geo import Locations, expand, pairwise_distances

coords = st.integers(2, 8).flatmap(
    lambda s: arrays(float, (s, 2), elements=st.floats(-100, 100)))


def test_three_four_five():
    d = pairwise_distances(expand(Locations([[0.0, 0.0], [3.0, 4.0]])))
    assert d[0, 1] == 5.0 and d[1, 0] == 5.0


def test_latent_only_separation():
    X = Locations([[0.0, 0.0], [0.0, 0.0]])
    d = pairwise_distances(expand(X, [[0.0], [2.0]]))
    assert d[0, 1] == 2.0


def test_zero_latent_equals_geographic(rng):
    X = Locations(rng.normal(size=(5, 2)))
    np.testing.assert_array_equal(pairwise_distances(expand(X, np.zeros((5, 2)))),
                                  pairwise_distances(X))


def test_expand_identity_and_projection(rng):
    X = Locations(rng.normal(size=(3, 2)))
    E = expand(X, np.zeros((3, 0)))
    np.testing.assert_array_equal(E.full, X.coords)
    E = expand(X, rng.normal(size=(3, 4)))
    np.testing.assert_array_equal(E.project(), X.coords)
    assert E.full.shape == (3, 6)


def test_errors():
    with pytest.raises(ValueError, match="site 'b'"):
        Locations([[0.0, 0.0], [np.nan, 1.0]], ("a", "b"))
    with pytest.raises(ValueError, match="rows"):
        expand(Locations([[0.0], [1.0]]), np.zeros((3, 1)))
    with pytest.raises(ValueError, match="unique"):
        Locations([[0.0], [1.0]], ("a", "a"))
    with pytest.raises(ValueError):
        Locations([[0.0, 1.0]])


@given(coords, st.data())
@settings(max_examples=50, deadline=None)
def test_distance_matrix_properties(X, data):
    s = X.shape[0]
    Z = data.draw(arrays(float, (s, 2), elements=st.floats(-10, 10)))
    D = pairwise_distances(expand(Locations(X), Z))
    D0 = pairwise_distances(expand(Locations(X), np.zeros((s, 2))))
    assert np.all(D >= D0)
    np.testing.assert_array_equal(D, D.T)
    assert np.all(np.diag(D) == 0)
    # triangle inequality
    tol = 1e-9 * (1 + D.max())
    assert np.all(D[:, None, :] <= D[:, :, None] + D[None, :, :] + tol)
