import numpy as np
import pytest

from gkdvlab.numerics import (
    Grid,
    GridError,
    GridFunction,
    RootFindError,
    derivative,
    find_root,
    inner,
    integrate,
)

# reference values from high-precision quadrature of the closed forms
MASS_Q5 = 2.7206990463513268  # = sqrt(3) * pi / 2


def test_grid_invariants():
    g = Grid(-10.0, 10.0, 101)
    assert g.h == pytest.approx(0.2)
    nodes = g.nodes()
    assert nodes.shape == (101,)
    assert np.all(nodes == -10.0 + g.h * np.arange(101))
    with pytest.raises(GridError):
        Grid(1.0, -1.0, 64)
    with pytest.raises(GridError):
        Grid(-1.0, 1.0, 8)


def test_gridfunction_validation():
    g = Grid(-1.0, 1.0, 32)
    with pytest.raises(GridError):
        GridFunction(g, np.zeros(16))
    with pytest.raises(GridError):
        GridFunction(g, np.full(32, np.nan))


def test_derivative_sin():
    g = Grid(-10.0, 10.0, 2048)
    f = GridFunction.from_callable(g, np.sin)
    d = derivative(f, 1)
    assert np.max(np.abs(d.values - np.cos(g.nodes()))) < 1e-5


def test_derivative_constant_zero():
    g = Grid(-5.0, 5.0, 256)
    f = GridFunction(g, np.ones(256))
    d = derivative(f, 1)
    assert np.max(np.abs(d.values[2:-2])) < 1e-13


def test_third_derivative_cubic_exact():
    # coarse grid keeps the 1/h^3 roundoff amplification below 1e-8
    g = Grid(-10.0, 10.0, 81)
    f = GridFunction.from_callable(g, lambda y: y**3)
    d = derivative(f, 3)
    assert np.max(np.abs(d.values[3:-3] - 6.0)) < 1e-8


def test_derivative_order_validation():
    g = Grid(-1.0, 1.0, 64)
    f = GridFunction(g, np.zeros(64))
    with pytest.raises(GridError):
        derivative(f, 4)
    with pytest.raises(GridError):
        derivative(f, 0)


def test_derivative_linearity():
    g = Grid(-3.0, 3.0, 200)
    f = GridFunction.from_callable(g, np.sin)
    h = GridFunction.from_callable(g, np.cos)
    lhs = derivative(GridFunction(g, 2.0 * f.values - 3.0 * h.values), 1).values
    rhs = 2.0 * derivative(f, 1).values - 3.0 * derivative(h, 1).values
    assert np.max(np.abs(lhs - rhs)) < 1e-11


def test_integrate_gaussian():
    g = Grid(-10.0, 10.0, 2049)
    f = GridFunction.from_callable(g, lambda y: np.exp(-(y**2)))
    assert abs(integrate(f) - np.sqrt(np.pi)) < 1e-10


def test_integrate_zero():
    g = Grid(-10.0, 10.0, 100)
    assert integrate(GridFunction(g, np.zeros(100))) == 0.0


def test_integrate_sech():
    g = Grid(-20.0, 20.0, 4097)
    f = GridFunction.from_callable(g, lambda y: 1.0 / np.cosh(2.0 * y))
    assert abs(integrate(f) - np.pi / 2.0) < 1e-8


def test_integrate_even_node_count():
    # odd interval count exercises the 3/8-rule tail
    g = Grid(-10.0, 10.0, 2048)
    f = GridFunction.from_callable(g, lambda y: np.exp(-(y**2)))
    assert abs(integrate(f) - np.sqrt(np.pi)) < 1e-10


def test_integrate_derivative_consistency():
    g = Grid(-15.0, 15.0, 1501)
    f = GridFunction.from_callable(g, lambda y: np.exp(-(y**2) / 2.0))
    assert abs(integrate(derivative(f, 1))) < 1e-8


def test_integrate_linearity():
    g = Grid(-5.0, 5.0, 301)
    f = GridFunction.from_callable(g, lambda y: np.exp(-(y**2)))
    h = GridFunction.from_callable(g, lambda y: np.exp(-((y - 1.0) ** 2)))
    lhs = integrate(GridFunction(g, 2.0 * f.values + 0.5 * h.values))
    rhs = 2.0 * integrate(f) + 0.5 * integrate(h)
    assert abs(lhs - rhs) < 1e-14


def test_inner_ground_state_mass():
    from gkdvlab.groundstate import ground_state_values

    g = Grid(-30.0, 30.0, 6001)
    q = GridFunction(g, ground_state_values(5.0, g.nodes()))
    assert abs(inner(q, q) - MASS_Q5) < 1e-6


def test_inner_zero_and_mismatch():
    g = Grid(-5.0, 5.0, 64)
    f = GridFunction.from_callable(g, np.sin)
    assert inner(f, GridFunction(g, np.zeros(64))) == 0.0
    g2 = Grid(-5.0, 5.0, 65)
    with pytest.raises(GridError):
        inner(f, GridFunction(g2, np.zeros(65)))


def test_inner_integration_by_parts_rule():
    # (Lam f, g) = -(f, Lam g + 2 sigma_c g) for decaying pairs
    from gkdvlab.groundstate import lambda_apply, scaling_index

    p = 5.15
    sc = scaling_index(p)
    g = Grid(-25.0, 25.0, 4001)
    f = GridFunction.from_callable(g, lambda y: np.exp(-(y**2) / 2.0))
    h = GridFunction.from_callable(g, lambda y: (1.0 + y) * np.exp(-((y - 0.5) ** 2)))
    lhs = inner(lambda_apply(f, p), h)
    rhs = -inner(f, GridFunction(g, lambda_apply(h, p).values + 2.0 * sc * h.values))
    assert abs(lhs - rhs) < 1e-6


def test_find_root_sqrt2():
    root = find_root(lambda x: x * x - 2.0, 1.0, 2.0, tol=1e-12)
    assert abs(root - np.sqrt(2.0)) < 1e-12


def test_find_root_identity():
    assert abs(find_root(lambda x: x, -1.0, 1.0)) < 1e-12


def test_find_root_errors():
    with pytest.raises(RootFindError):
        find_root(lambda x: x * x + 1.0, -1.0, 1.0)
    with pytest.raises(RootFindError):
        find_root(lambda x: float("nan"), -1.0, 1.0)
