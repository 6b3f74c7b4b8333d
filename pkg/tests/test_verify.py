import numpy as np
import pytest

from bilevel_bounds.core import GaussianNoise, Oracle, TraceRecord, ZeroNoise, make_sfo
from bilevel_bounds.errors import ContractError, DivergenceError
from bilevel_bounds.lowerbound import ChainLayout, build_ncsc, nc_chain, ncsc_parameters_for_layout
from bilevel_bounds.applications import decoupled_problem
from bilevel_bounds.verify import (SUITES, AuditReport, ball_sampler, dense_hessian, fd_gradient, lipschitz_estimate,
                                   min_eigenvalue, run_suite, sfo_stats, zero_chain_audit)


def test_fd_gradient_quadratic():
    x = np.array([1.0, -2.0, 0.5])
    g = fd_gradient(lambda u: 0.5 * float(u @ u), x, h=1e-3)
    assert np.abs(g - x).max() <= 1e-6


def test_fd_gradient_richardson():
    fn = lambda u: float(np.sum(np.sin(u)) + np.prod(np.cos(u)))  # noqa: E731
    x = np.array([0.3, -0.7, 1.1])
    exact = np.cos(x) - np.sin(x) * np.prod(np.cos(x)) / np.cos(x)
    e1 = np.abs(fd_gradient(fn, x, h=1e-2) - exact).max()
    e2 = np.abs(fd_gradient(fn, x, h=5e-3) - exact).max()
    assert 3.5 <= e1 / e2 <= 4.5


def test_fd_on_nc_chain():
    x = np.random.default_rng(0).standard_normal(8)
    _, g = nc_chain(x)
    fd = fd_gradient(lambda u: nc_chain(u)[0], x, h=1e-5)
    assert np.linalg.norm(fd - g) <= 1e-4 * np.linalg.norm(g)


def test_fd_nonfinite():
    with pytest.raises(DivergenceError):
        fd_gradient(lambda u: float("nan"), np.zeros(2))
    with pytest.raises(ContractError):
        fd_gradient(lambda u: 0.0, np.zeros(2), h=-1.0)


def test_dense_hessian_quadratic():
    rng = np.random.default_rng(1)
    M = rng.standard_normal((4, 4))
    M = M + M.T
    for x in (np.zeros(4), rng.standard_normal(4)):
        H = dense_hessian(lambda u: 0.5 * float(u @ M @ u), x)
        assert np.abs(H - M).max() <= 1e-5
    assert abs(min_eigenvalue(M) - np.linalg.eigvalsh(M)[0]) <= 1e-12
    with pytest.raises(ContractError):
        dense_hessian(lambda u: 0.0, np.zeros(513))


def test_lipschitz_linear_map():
    rng = np.random.default_rng(2)
    M = rng.standard_normal((5, 5))
    norm = np.linalg.norm(M, 2)
    est_small = lipschitz_estimate(lambda u: M @ u, ball_sampler(5), 10)
    est_big = lipschitz_estimate(lambda u: M @ u, ball_sampler(5), 2000)
    assert est_small <= est_big <= norm * (1 + 1e-12)
    assert est_big >= 0.9 * norm
    with pytest.raises(ContractError):
        lipschitz_estimate(lambda u: u, ball_sampler(2), 0)


def test_lipschitz_certificate_on_instance():
    mu, Delta = ncsc_parameters_for_layout(10, 4, 1e-2)
    inst, _ = build_ncsc(1, 1.0, mu, Delta, 1e-2)
    dx = inst.d_x

    def grad_g(w):
        gx, gy = inst.grad_g(w[:dx], w[dx:])
        return np.concatenate([gx, gy])

    est = lipschitz_estimate(grad_g, ball_sampler(dx + inst.d_y, 10.0), 200)
    assert est <= inst.profile.L1 * (1 + 1e-6)


def test_lipschitz_quadratic_hyperobjective():
    from bilevel_bounds.applications import random_quadratic_problem
    for seed in range(3):
        prob = random_quadratic_problem(6, 20.0, seed=seed)
        est = lipschitz_estimate(lambda x: prob.reference(x)[1], ball_sampler(6, 1.0), 200, seed=seed)
        assert est <= 10 * prob.profile.kappa_y**2 * prob.profile.L1


def test_sfo_stats_zero_noise():
    prob = decoupled_problem(4)
    st = sfo_stats(make_sfo(prob, ZeroNoise(), 0), np.ones(4), np.ones(4), 1000)
    assert st.bias_norm == 0.0 and st.variance == 0.0 and st.bias_ok
    with pytest.raises(ContractError):
        sfo_stats(make_sfo(prob, ZeroNoise(), 0), np.ones(4), np.ones(4), 10)


def test_sfo_stats_gaussian():
    prob = decoupled_problem(4)
    st = sfo_stats(make_sfo(prob, GaussianNoise(2.0), 3), np.ones(4), np.ones(4), 20_000)
    # gy_f carries half of the total variance 4
    assert abs(st.variance - 2.0) <= 0.1
    assert st.bias_norm <= 4 * np.sqrt(st.variance) / np.sqrt(st.n_samples)


def _rec(seq, x, w, supports=()):
    return TraceRecord(seq, "fo", np.asarray(x, float), np.asarray(w, float), None, supports)


def test_audit_empty_trace():
    rep = zero_chain_audit([], ChainLayout(3, 10))
    assert rep == AuditReport() and rep.n_violations == 0


def test_audit_flags_jump():
    lay = ChainLayout(3, 10)
    z = np.zeros(lay.d_w)
    recs = [_rec(0, np.zeros(3), z, (np.array([0]),)),
            _rec(1, np.zeros(3), z, (np.array([0]), np.array([lay.y_index(1, 1)]))),
            _rec(2, np.zeros(3), z, (np.array([], int), np.array([lay.y_index(1, 5)])))]
    rep = zero_chain_audit(recs, lay)
    assert rep.increments == [1, 1, 4]
    assert rep.violations == [2] and rep.first_violation == 2


def test_audit_layout_mismatch():
    with pytest.raises(ContractError):
        zero_chain_audit([_rec(0, np.zeros(4), np.zeros(5))], ChainLayout(3, 10))


def test_audit_gd_penalty_and_determinism():
    from bilevel_bounds.solvers import gd_penalty
    mu, Delta = ncsc_parameters_for_layout(10, 3, 1e-2)
    inst, pred = build_ncsc(1, 1.0, mu, Delta, 1e-2)
    orc = Oracle(inst, record=True)
    rep = gd_penalty(inst, 1.0 / (inst.hyperobjective_smoothness() * 50), 6.0 / mu, 20_000,
                     np.zeros(inst.d_x), oracle=orc, monitor=False)
    a1 = zero_chain_audit(orc.trace, inst.layout, inst)
    a2 = zero_chain_audit(orc.trace, inst.layout, inst)
    assert a1.to_text() == a2.to_text()
    assert len(a1.increments) == len(orc.trace) == rep.tally.total
    assert a1.n_violations == 0
    assert a1.completion_index is not None and a1.completion_index >= pred.n_prime


@pytest.mark.parametrize("name", SUITES)
def test_suites_pass(name):
    results = run_suite(name)
    assert results and all(r.passed for r in results), [r for r in results if not r.passed]


def test_unknown_suite():
    with pytest.raises(ContractError):
        run_suite("nope")
