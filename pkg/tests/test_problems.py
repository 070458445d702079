import numpy as np
import pytest
import sympy as sp

from wgporo.problems import ProblemParams, lame_from_E_lambda, make_problem

x, y, t = sp.symbols("x y t")
PTS = [(0.3, 0.7, 0.2), (0.11, 0.52, 1e-3), (0.9, 0.05, 1.0)]


def _div_sigma(u, lam, mu):
    div = sp.diff(u[0], x) + sp.diff(u[1], y)
    X = (x, y)
    strain = lambda i, j: (sp.diff(u[i], X[j]) + sp.diff(u[j], X[i])) / 2
    sig = [[2 * mu * strain(i, j) + (lam * div if i == j else 0) for j in range(2)]
           for i in range(2)]
    return [sp.diff(sig[i][0], x) + sp.diff(sig[i][1], y) for i in range(2)], div


@pytest.mark.parametrize("lam,eps", [(1.4286, 0.2), (1.6667e3, 2e-4), (1.6667e6, 2e-7)])
def test_lame_parameters(lam, eps):
    mu, nu, e = lame_from_E_lambda(1.0, lam)
    assert e == pytest.approx(eps, rel=1e-3)
    assert mu == pytest.approx(1 / (2 * (1 + nu)), rel=1e-14)
    assert lam * (1 - 2 * nu) * (1 + nu) == pytest.approx(nu, rel=1e-6)
    ProblemParams.from_lambda(lam)  # passes its own consistency check


def test_params_validation():
    with pytest.raises(ValueError):
        ProblemParams(E=1.0, lam=1.0, mu=0.3, nu=0.1)
    with pytest.raises(ValueError):
        ProblemParams.from_lambda(1.0, c0=-1.0)
    with pytest.raises(ValueError):
        ProblemParams.from_lambda(1.0, dt=0.0)
    with pytest.raises(ValueError):
        lame_from_E_lambda(1.0, -2.0)
    with pytest.raises(ValueError):
        make_problem("stokes", ProblemParams.from_lambda(1.0))


@pytest.mark.parametrize("lam", [1.4286, 1.6667e3])
def test_elasticity_force_matches_symbolic_residual(lam):
    prm = ProblemParams.from_lambda(lam)
    pr = make_problem("elasticity2d", prm)
    u = [sp.sin(x) * sp.sin(y) + x / prm.lam, sp.cos(x) * sp.cos(y) + y / prm.lam]
    ds, _ = _div_sigma(u, prm.lam, prm.mu)
    f = sp.lambdify((x, y), [-d for d in ds])
    for X, Y, _ in PTS:
        np.testing.assert_allclose(pr.force(np.array(X), np.array(Y)), f(X, Y), rtol=1e-10)
        np.testing.assert_allclose(pr.u_exact(np.array(X), np.array(Y)),
                                   sp.lambdify((x, y), u)(X, Y), rtol=1e-14)


def _poro_exact(prm):
    pi, lm = sp.pi, prm.lam + prm.mu
    sxy = sp.sin(pi * x) * sp.sin(pi * y) / lm
    u = [t * ((-1 + sp.cos(2 * pi * x)) * sp.sin(2 * pi * y) + sxy),
         t * (sp.sin(2 * pi * x) * (1 - sp.cos(2 * pi * y)) + sxy)]
    p = -t * sp.sin(pi * x) * sp.sin(pi * y)
    return u, p


@pytest.mark.parametrize("lam,c0", [(1.4286, 1.0), (1.6667e3, 0.0)])
def test_poro_force_matches_symbolic_residual(lam, c0):
    prm = ProblemParams.from_lambda(lam, c0=c0)
    pr = make_problem("poro2d", prm)
    u, p = _poro_exact(prm)
    ds, _ = _div_sigma(u, prm.lam, prm.mu)
    f = sp.lambdify((x, y, t), [-ds[i] + prm.alpha * sp.diff(p, v) for i, v in enumerate((x, y))])
    for X, Y, T in PTS:
        np.testing.assert_allclose(pr.force(np.array(X), np.array(Y), T), f(X, Y, T),
                                   rtol=1e-9, atol=1e-9)


@pytest.mark.parametrize("lam,c0", [(1.4286, 1.0), (1.6667e3, 0.0)])
def test_poro_source_is_kept_verbatim_despite_sign_of_diffusion_term(lam, c0):
    """The residual of the flow equation differs from the implemented source by
    exactly ``-4 pi^2 t sin(pi x) sin(pi y)``: the diffusion term enters the
    displayed source with the opposite sign.  The displayed source is used."""
    prm = ProblemParams.from_lambda(lam, c0=c0)
    pr = make_problem("poro2d", prm)
    u, p = _poro_exact(prm)
    div = sp.diff(u[0], x) + sp.diff(u[1], y)
    resid = sp.diff(prm.c0 * p + prm.alpha * div, t) - prm.kappa * (sp.diff(p, x, 2) + sp.diff(p, y, 2))
    s_pde = sp.lambdify((x, y, t), resid)
    for X, Y, T in PTS:
        gap = s_pde(X, Y, T) - pr.source(np.array(X), np.array(Y), T)
        expected = -4 * np.pi**2 * T * np.sin(np.pi * X) * np.sin(np.pi * Y)
        assert gap == pytest.approx(expected, rel=1e-10, abs=1e-12)


def test_poro_boundary_data_is_homogeneous():
    pr = make_problem("poro2d", ProblemParams.from_lambda(1.4286))
    xs = np.array([0.0, 1.0, 0.3, 0.3])
    ys = np.array([0.4, 0.6, 0.0, 1.0])
    np.testing.assert_allclose(pr.u_exact(xs, ys, 0.5), 0.0, atol=1e-15)
    np.testing.assert_allclose(pr.p_exact(xs, ys, 0.5), 0.0, atol=1e-15)


def test_poro3d_data_shapes_and_time_dependence():
    prm = ProblemParams.from_lambda(1.4286, c0=1.0)
    pr = make_problem("poro3d", prm)
    assert pr.params.dim == 3 and pr.u_exact is None
    X = np.random.default_rng(0).uniform(0, 1, (3, 7))
    f1 = pr.force(*X, 1.0)
    assert f1.shape == (3, 7) and np.all(np.isfinite(f1))
    np.testing.assert_allclose(pr.force(*X, 0.25), 0.25 * f1, rtol=1e-14)
    s0 = pr.source(*X, 0.0)
    s1 = pr.source(*X, 1.0)
    sss = np.prod(np.sin(np.pi * X), axis=0)
    np.testing.assert_allclose(s1 - s0, 3 * np.pi**2 * sss, rtol=1e-12)
    np.testing.assert_array_equal(pr.u_dirichlet(*X, 1.0), 0.0)
