import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bilevel_bounds.core import Oracle
from bilevel_bounds.errors import ContractError, ParseError, RegimeError
from bilevel_bounds.lowerbound import (ChainLayout, NcscHardInstance, UpsilonParams, ab_coefficients, b_first_row,
                                       build_csc, build_ncsc, build_scsc, build_stochastic, chain_matrix,
                                       convex_chain, ell_bar_1, hyperobjective_ncsc, load_instance, nc_chain,
                                       ncsc_parameters_for_layout, phi, prog, psi, save_instance, scsc_ratio,
                                       spike_chain, upsilon, upsilon_deriv, upsilon_quad)
from bilevel_bounds.lowerbound.stochastic import random_orthonormal
from bilevel_bounds.verify import dense_hessian, fd_gradient, zero_chain_audit

# Upsilon_r(0) by 30-digit adaptive quadrature (mpmath), frozen before the build
UPSILON_AT_ZERO = {1.0: 7.34105122590292141, 2.0: 9.11610462086749397, 10.0: 9.96021296140642352}
# (a_10, b_10) from a 40-digit inverse of I/100 + A_10
A10, B10 = -0.04839369705562017, 1.17309361570613618


def small_instance(K=10, T=6, regime="nc", mu_x=0.0, rotation_seed=None):
    layout = ChainLayout(T, K)
    ups = UpsilonParams(1.0, 1.0) if regime == "nc" else None
    return NcscHardInstance(layout, ups, 0.3, 2.0, 2.0 / (ell_bar_1(K) * K**2), regime, mu_x=mu_x,
                            rotation_seed=rotation_seed)


# ---- regularizer -------------------------------------------------------------

@pytest.mark.parametrize("r", [1.0, 1.5, 2.0, 10.0, 100.0])
def test_upsilon_vanishes_at_one(r):
    assert upsilon(1.0, r) == 0.0
    assert upsilon_deriv(0.0, r) == 0.0 and upsilon_deriv(1.0, r) == 0.0


@pytest.mark.parametrize("r", [1.0, 2.0, 10.0])
def test_upsilon_at_zero(r):
    assert upsilon(0.0, r) <= 10.0
    assert abs(upsilon(0.0, r) - UPSILON_AT_ZERO[r]) <= 1e-12 * UPSILON_AT_ZERO[r]


@pytest.mark.parametrize("r", [1.0, 3.0, 50.0])
def test_upsilon_matches_quadrature(r):
    xs = np.linspace(-3.0, 4.0, 64)
    closed = upsilon(xs, r)
    for x, c in zip(xs, closed):
        q = upsilon_quad(x, r)
        assert abs(c - q) <= 1e-10 * (1 + abs(q))


@given(st.floats(-20, 20), st.sampled_from([1.0, 2.0, 7.0]))
def test_upsilon_positive_away_from_one(x, r):
    if abs(x - 1.0) > 1e-3:
        assert upsilon(x, r) > 0


@pytest.mark.parametrize("order", [1, 2, 3])
def test_upsilon_derivatives_vs_fd(order):
    xs = np.linspace(-2.5, 2.5, 11)
    h = 1e-5
    for x in xs:
        fd = (upsilon_deriv(x + h, 2.0, order - 1) - upsilon_deriv(x - h, 2.0, order - 1)) / (2 * h)
        assert abs(upsilon_deriv(x, 2.0, order) - fd) <= 1e-5 * (1 + abs(fd))


def test_upsilon_rejects_small_r():
    with pytest.raises(ContractError):
        upsilon(0.0, 0.5)
    with pytest.raises(ContractError):
        UpsilonParams(r=1.0, nu=0.0)


# ---- chains ------------------------------------------------------------------

def test_prog_examples():
    assert prog(np.zeros(5)) == 0
    assert prog(np.eye(5)[2]) == 3
    assert prog(np.array([1.0, 1e-13, 0.0]), tol=1e-12) == 1
    with pytest.raises(ContractError):
        prog(np.ones(2), tol=-1)


@pytest.mark.parametrize("T", [2, 5, 40])
def test_nc_chain_minimum_at_ones(T):
    val, g = nc_chain(np.ones(T))
    assert val == 0.0 and not np.any(g)


def test_nc_chain_gradient_floor():
    rng = np.random.default_rng(0)
    for nu in (1.0, 0.3, 0.01):
        for _ in range(100):
            T = int(rng.integers(3, 30))
            x = rng.standard_normal(T) * rng.choice([0.1, 1.0, 3.0])
            x[-2:] = 0.0
            assert np.linalg.norm(nc_chain(x, nu, 1.0)[1]) > nu**0.75 / 4


def test_nc_chain_gradient_vs_fd():
    rng = np.random.default_rng(1)
    for _ in range(10):
        x = rng.standard_normal(7)
        _, g = nc_chain(x, 0.5, 2.0)
        np.testing.assert_allclose(g, fd_gradient(lambda u: nc_chain(u, 0.5, 2.0)[0], x), rtol=1e-6, atol=1e-6)


@given(st.integers(1, 12), st.integers(0, 2**31 - 1))
def test_nc_chain_zero_chain(t, seed):
    rng = np.random.default_rng(seed)
    T = 12
    x = np.zeros(T)
    x[: t - 1] = rng.standard_normal(t - 1)
    _, g = nc_chain(x)
    assert prog(g) <= t
    _, gc = convex_chain(x)
    assert prog(gc) <= t


def test_gd_on_nc_chain_progress():
    T = 20
    x = np.zeros(T)
    last = prog(x)
    for _ in range(60):
        x = x - nc_chain(x)[1] / 200.0
        p = prog(x)
        assert p <= last + 1
        last = p
    assert last == T


def test_convex_chain_floor_examples():
    rng = np.random.default_rng(2)
    for T in (8, 32):
        for _ in range(100):
            x = rng.standard_normal(T) * 2
            x[-1] = 0.0
            assert np.linalg.norm(convex_chain(x)[1]) > T**-1.5


def test_chain_matrix():
    A = chain_matrix(4)
    np.testing.assert_array_equal(A, [[1, -1, 0, 0], [-1, 2, -1, 0], [0, -1, 2, -1], [0, 0, -1, 1]])
    assert np.all(A @ np.ones(4) == 0)


# ---- coefficients ------------------------------------------------------------

def test_ab_coefficients_frozen():
    a, b = ab_coefficients(10)
    assert abs(a - A10) <= 1e-12 and abs(b - B10) <= 1e-12


@pytest.mark.parametrize("K", [10, 20, 50, 100])
def test_ab_coefficients_bounds(K):
    a, b = ab_coefficients(K)
    assert abs(a) <= 20 and abs(b) <= 10


@pytest.mark.parametrize("K", [10, 50, 200])
def test_b_first_row_bounds(K):
    row = b_first_row(K)
    assert np.all(row >= 0.1 * K) and np.all(row <= 20 * K)


def test_ab_needs_large_k():
    with pytest.raises(ContractError):
        ab_coefficients(5)
    assert ab_coefficients(5, allow_small=True)[1] > 0


# ---- deterministic instances -------------------------------------------------

def test_layout_positions():
    lay = ChainLayout(4, 10)
    assert lay.n == 4 * 11 - 10 and lay.n_prime == 3 * 11 - 10
    assert lay.x_position(2) == 12 and lay.y_position(1, 10) == 11
    pos = lay.w_positions
    assert sorted(pos.tolist()) == list(range(1, lay.n + 1))
    with pytest.raises(ContractError):
        ChainLayout(4, 9)
    with pytest.raises(ContractError):
        ChainLayout(1, 10)


@pytest.mark.parametrize("K", [10, 20])
def test_lower_solution_scaling(K):
    inst = small_instance(K=K)
    rng = np.random.default_rng(K)
    for _ in range(5):
        x = rng.standard_normal(inst.d_x)
        z, _ = inst.lower_solution(x)
        np.testing.assert_allclose(z, K**2 * x, rtol=1e-9, atol=1e-9)


@pytest.mark.parametrize("K", [10, 20])
def test_hyperobjective_matches_dense_solve(K):
    inst = small_instance(K=K)
    rng = np.random.default_rng(3)
    for _ in range(100):
        x = rng.standard_normal(inst.d_x) * inst.beta / K**1.5 * rng.choice([0.3, 1.0, 3.0])
        w = np.concatenate(inst.lower_solution(x))
        F_ref = inst.f(x, w)
        F, _ = hyperobjective_ncsc(inst, x)
        assert abs(F - F_ref) <= 1e-8 * max(1.0, abs(F_ref))


def test_hyperobjective_gradient_and_minimizer():
    inst = small_instance()
    rng = np.random.default_rng(4)
    x = rng.standard_normal(inst.d_x) * 0.01
    _, g = inst.hyperobjective(x)
    fd = fd_gradient(lambda u: inst.hyperobjective(u)[0], x, h=1e-7)
    np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-6 * np.linalg.norm(g))
    _, g0 = inst.hyperobjective(inst.minimizer)
    assert np.linalg.norm(g0) <= 1e-12 * inst.gradient_floor()


def test_hyperobjective_at_zero_bound():
    mu, Delta = ncsc_parameters_for_layout(10, 8, 1e-2)
    inst, pred = build_ncsc(1, 1.0, mu, Delta, 1e-2)
    assert (pred.K, pred.T) == (10, 8)
    F0, _ = inst.hyperobjective(np.zeros(inst.d_x))
    assert F0 <= inst.amplitude * (math.sqrt(inst.nu) / 2 + 10 * inst.nu * (inst.layout.T - 1))


def test_lower_strong_convexity_and_smoothness():
    mu, Delta = ncsc_parameters_for_layout(10, 4, 1e-2)
    inst, _ = build_ncsc(1, 1.0, mu, Delta, 1e-2)
    ev = np.linalg.eigvalsh(inst.lower.H)
    assert ev[0] >= mu * (1 - 1e-8)
    assert ev[-1] <= inst.profile.L1 * (1 + 1e-12)
    # unscaled lower level gradient Lipschitz constant
    assert ev[-1] / inst.gscale <= 5.0


def test_rotated_instance_hyperobjective():
    inst = small_instance(rotation_seed=5)
    x = np.random.default_rng(6).standard_normal(inst.d_x) * 0.02
    w = np.concatenate(inst.lower_solution(x))
    assert abs(inst.f(x, w) - inst.hyperobjective(x)[0]) <= 1e-8 * max(1, abs(inst.f(x, w)))


def test_instance_gradients_vs_fd():
    inst = small_instance(T=3)
    rng = np.random.default_rng(7)
    x, w = rng.standard_normal(inst.d_x) * 0.05, rng.standard_normal(inst.d_y) * 0.5
    gx, gw = inst.grad_g(x, w)
    np.testing.assert_allclose(gw, fd_gradient(lambda u: inst.g(x, u), w), rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(gx, fd_gradient(lambda u: inst.g(u, w), x), rtol=1e-6, atol=1e-8)
    _, fw = inst.grad_f(x, w)
    np.testing.assert_allclose(fw, fd_gradient(lambda u: inst.f(x, u), w), rtol=1e-6, atol=1e-8)


def test_build_ncsc_regime_errors():
    with pytest.raises(RegimeError):
        build_ncsc(1, 1.0, 0.5, 1.0, 1e-3)
    mu, Delta = ncsc_parameters_for_layout(10, 4, 1e-2)
    with pytest.raises(RegimeError):
        build_ncsc(1, 1.0, mu, Delta * 1e-3, 1e-2)


@pytest.mark.parametrize("p", [2, 3])
def test_build_ncsc_higher_order(p):
    mu, Delta = ncsc_parameters_for_layout(10, 4, 1e-2)
    inst, pred = build_ncsc(p, [1.0] * p, mu, Delta, 1e-3)
    assert 0 < inst.nu <= 1 and pred.value > 0 and pred.regime in ("p=2", "p>=3")


def test_zero_chain_audit_on_gd_penalty():
    from bilevel_bounds.solvers import gd_penalty
    mu, Delta = ncsc_parameters_for_layout(10, 4, 1e-2)
    inst, pred = build_ncsc(1, 1.0, mu, Delta, 1e-2)
    orc = Oracle(inst, record=True)
    lam = 3 * 2 / mu
    gd_penalty(inst, 1e-3 / inst.hyperobjective_smoothness(), lam, 60, np.zeros(inst.d_x), oracle=orc,
               monitor=False)
    rep = zero_chain_audit(orc.trace, inst.layout, inst)
    assert rep.n_violations == 0 and not rep.floor_violations and rep.floor_checked > 0


def test_csc_minimizer_and_convexity():
    inst, pred = build_csc(1.0, 1e-3, 2.0, 1e-2)
    assert np.linalg.norm(inst.minimizer) <= inst.D * (1 + 1e-12)
    assert np.linalg.eigvalsh(inst.hyperobjective_hessian())[0] >= -1e-10
    _, g = inst.hyperobjective(inst.minimizer)
    assert np.linalg.norm(g) <= 1e-9
    assert pred.regime == "C-SC"


def test_scsc_geometric_minimizer():
    inst, pred = build_scsc(1.0, 0.5, 1e-3, 1.0, 1e-4)
    T, K = inst.layout.T, inst.layout.K
    q = scsc_ratio(inst.alpha)
    assert abs(-1 + (2 + inst.alpha) * q - q * q) <= 1e-14
    geo = inst.beta / K**1.5 * q ** np.arange(1, T + 1)
    resid = np.linalg.norm(inst.minimizer - geo)
    assert resid <= inst.beta * q ** (T + 1) / (K**3 * inst.alpha)
    assert np.linalg.eigvalsh(inst.hyperobjective_hessian())[0] >= inst.mu_x - 1e-10


def test_scsc_regime_error():
    with pytest.raises(RegimeError):
        build_scsc(1.0, 1e-4, 1e-3, 1.0, 1.0)


def test_instance_round_trip(tmp_path):
    for inst in (small_instance(rotation_seed=3), build_csc(1.0, 1e-3, 2.0, 1e-2)[0],
                 build_stochastic(1.0, 0.1, 1.0, 1.0, 1e-2, seed=4)[0]):
        path = tmp_path / "inst.json"
        save_instance(inst, path)
        back = load_instance(path)
        x = np.random.default_rng(0).standard_normal(inst.d_x) * 1e-3
        assert back.hyperobjective(x)[0] == inst.hyperobjective(x)[0]
        assert back.params() == inst.params()
    path.write_text("{not json")
    with pytest.raises(ParseError):
        load_instance(path)


# ---- stochastic instance -----------------------------------------------------

def test_psi_examples():
    assert psi(0.5) == 0.0 and psi(-1.0) == 0.0 and psi(0.2) == 0.0
    assert psi(1.0) == 1.0
    assert abs(phi(0.0) - math.sqrt(2 * math.pi * math.e) / 2) <= 1e-14


def test_random_orthonormal():
    U = random_orthonormal(20, 8, np.random.default_rng(0))
    assert np.abs(U.T @ U - np.eye(8)).max() <= 1e-12


def test_stochastic_lower_solution():
    inst, pred = build_stochastic(1.0, 0.1, 1.0, 1.0, 1e-2, seed=1)
    x = np.random.default_rng(2).standard_normal(inst.d_x)
    from bilevel_bounds.core import lower_level_solution
    np.testing.assert_allclose(lower_level_solution(inst.lower, x), inst.kappa * x, rtol=1e-12)
    assert 0 < inst.p <= 1 and pred.regime == "stochastic"


def test_spike_chain_against_termwise_loop():
    rng = np.random.default_rng(9)
    for _ in range(20):
        v = rng.uniform(-2.0, 3.0, int(rng.integers(1, 9)))
        ref = -psi(1.0) * phi(v[0])
        for i in range(1, v.size):
            ref += psi(-v[i - 1]) * phi(-v[i]) - psi(v[i - 1]) * phi(v[i])
        val, g = spike_chain(v)
        assert abs(val - ref) <= 1e-12 * max(1.0, abs(ref))
        np.testing.assert_allclose(g, fd_gradient(lambda u: spike_chain(u)[0], v), rtol=1e-6, atol=1e-7)
