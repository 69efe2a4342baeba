import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tdnn.errors import SingularDiffusivityError
from tdnn.mesh import EXTERIOR, HOLE
from tdnn.problems import (
    builtin_problem,
    diffusivity_p1,
    diffusivity_p2,
    diffusivity_p2_raw,
    diffusivity_p3,
    forcing_box,
)


def test_p1_values():
    np.testing.assert_allclose(diffusivity_p1(1, 1, 0.05), [[1.05, -0.95], [-0.95, 1.05]])
    np.testing.assert_allclose(diffusivity_p1(0, 1, 0.05), [[1, 0], [0, 0.05]])


def test_p1_singular_at_origin():
    with pytest.raises(SingularDiffusivityError):
        diffusivity_p1(0, 0, 0.05)
    with pytest.raises(SingularDiffusivityError):
        diffusivity_p1(np.array([0.5, 0.0]), np.array([0.5, 0.0]))
    with pytest.raises(ValueError):
        diffusivity_p1(1, 1, 0.0)


def test_p1_vectorised_symmetric(rng):
    x, y = rng.random(1000) + 1e-3, rng.random(1000) + 1e-3
    D = diffusivity_p1(x, y)
    assert D.shape == (1000, 2, 2)
    np.testing.assert_array_equal(D, np.swapaxes(D, -1, -2))
    assert np.all(np.linalg.eigvalsh(D) > 0)


def test_p2_values():
    D = diffusivity_p2((1, 1), 0.1, 0.01)
    np.testing.assert_allclose(D[0, 0], 0.01 * np.sqrt(2) + 0.09 / np.sqrt(2))
    np.testing.assert_allclose(D[0, 0], 0.0777817, atol=5e-8)
    np.testing.assert_allclose(D[0, 1], 0.0636396, atol=5e-8)
    np.testing.assert_allclose(diffusivity_p2((1, 0), 0.1, 0.01), np.diag([0.1, 0.01]))
    np.testing.assert_allclose(diffusivity_p2((1, 1), 0.3, 0.3), 0.3 * np.sqrt(2) * np.eye(2))


def test_p2_beta_is_eigenvector():
    b = np.array([1.0, 1.0])
    np.testing.assert_allclose(diffusivity_p2(b) @ b, 0.1 * np.linalg.norm(b) * b, atol=1e-14)


def test_p2_raw_form():
    D = diffusivity_p2_raw((1, 1), 0.1, 0.01)
    np.testing.assert_allclose(D, [[0.1, 0.09], [0.09, 0.1]], atol=1e-15)
    np.testing.assert_allclose(np.linalg.eigvalsh(D), [0.01, 0.19])
    # unit beta: both forms agree
    u = np.array([0.6, 0.8])
    np.testing.assert_allclose(diffusivity_p2_raw(u), diffusivity_p2(u), atol=1e-15)


def test_p2_rejects_bad_input():
    for f in (diffusivity_p2, diffusivity_p2_raw):
        with pytest.raises(ValueError):
            f((0, 0))
        with pytest.raises(ValueError):
            f((1, 1), 0.01, 0.1)


def test_p3_values():
    D = diffusivity_p3(1, 100, np.pi / 6)
    # R diag R^T with R = [[c, s], [-s, c]]: d12 = c s (k2 - k1)
    assert np.isclose(D[0, 0], 25.75)
    assert np.isclose(D[1, 1], 75.25)
    assert np.isclose(D[0, 1], 99 * np.sqrt(3) / 4)
    assert np.isclose(D[0, 1], 42.8683, atol=5e-5)
    np.testing.assert_allclose(np.linalg.eigvalsh(D), [1, 100], atol=1e-12)
    np.testing.assert_allclose(diffusivity_p3(4, 4, 0.7), 4 * np.eye(2), atol=1e-14)
    np.testing.assert_allclose(diffusivity_p3(1, 100, 0), np.diag([1, 100]))
    # k1 eigenvector is R e1 = (cos, -sin)
    t = np.pi / 6
    v = np.array([np.cos(t), -np.sin(t)])
    np.testing.assert_allclose(D @ v, v, atol=1e-12)
    with pytest.raises(ValueError):
        diffusivity_p3(0, 1)


def test_forcing_box():
    assert forcing_box(0.5, 0.5) == 1
    assert forcing_box(0.1, 0.9) == 0
    assert forcing_box(0.375, 0.5) == 1
    assert forcing_box(0.625, 0.625) == 1
    assert forcing_box(0.6251, 0.5) == 0


def test_builtin_problems():
    p1, p2, p3 = (builtin_problem(i) for i in (1, 2, 3))
    assert p1.dirichlet(EXTERIOR, 0.3, 0.0) == 0
    assert p3.dirichlet(HOLE, 0.5, 4 / 9) == 2
    assert p3.dirichlet(EXTERIOR, 0.0, 0.2) == 0
    assert np.all(p3.forcing(np.random.rand(5), np.random.rand(5)) == 0)
    assert p3.domain == "unit-square-with-hole"
    assert p2.params["form"] == "raw"
    np.testing.assert_allclose(
        builtin_problem(2, p2_form="normalized").diffusivity(0.2, 0.3), diffusivity_p2()
    )
    with pytest.raises(KeyError):
        p1.dirichlet(HOLE, 0, 0)
    with pytest.raises(ValueError):
        builtin_problem(4)
    with pytest.raises(ValueError):
        builtin_problem(2, p2_form="other")


def test_total_source():
    # midpoint sampling on a 2000^2 grid of the closed box indicator
    t = (np.arange(2000) + 0.5) / 2000
    X, Y = np.meshgrid(t, t)
    assert np.isclose(forcing_box(X, Y).mean(), 0.0625, atol=1e-3)
    *box, value = builtin_problem(1).source_box
    assert (box[1] - box[0]) * (box[3] - box[2]) * value == 0.0625


@given(st.floats(0.01, 10), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_scaled_problem(s, x, y):
    p = builtin_problem(3).scaled(s)
    np.testing.assert_allclose(p.diffusivity(x, y), s * diffusivity_p3())
    assert p.params["scale"] == s


@given(st.floats(0.01, 1), st.floats(0.01, 1))
def test_builtin_diffusivities_spd(x, y):
    for pid in (1, 2, 3):
        D = builtin_problem(pid).diffusivity(x, y)
        np.testing.assert_array_equal(D, D.T)
        assert np.all(np.linalg.eigvalsh(D) > 0)
