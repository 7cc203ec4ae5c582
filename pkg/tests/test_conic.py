import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from rsma_istn import conic
from rsma_istn.conic import Affine, ComplexAffine, ConicProgram, available_backends
from rsma_istn.conic.ipm import solve_socp

from socp_instances import as_program, independent_violation, planted_socp

BACKENDS = available_backends()


def test_python_backend_always_available():
    assert "python" in BACKENDS


@pytest.mark.parametrize("backend", BACKENDS)
def test_fixed_cone(backend):
    prog = ConicProgram()
    t = prog.add_variable("t")[0]
    prog.add_soc([Affine.constant(3.0), Affine.constant(4.0)], Affine.var(t))
    prog.maximize(Affine.var(t, -1.0))
    res = conic.solve(prog, backend)
    assert res.status == "optimal"
    assert res.x[t] == pytest.approx(5.0, abs=1e-7)


@pytest.mark.parametrize("backend", BACKENDS)
def test_single_bound(backend):
    prog = ConicProgram()
    x = prog.add_variable("x")[0]
    prog.add_le(Affine.var(x), 1.0)
    prog.maximize(Affine.var(x))
    res = conic.solve(prog, backend)
    assert res.ok and res.objective_value == pytest.approx(1.0, abs=1e-7)


@pytest.mark.parametrize("backend", BACKENDS)
def test_unbounded_and_infeasible(backend):
    prog = ConicProgram()
    x = prog.add_variable("x")[0]
    prog.add_ge(Affine.var(x), 0.0)
    prog.maximize(Affine.var(x))
    assert conic.solve(prog, backend).status == "unbounded"
    prog = ConicProgram()
    x = prog.add_variable("x")[0]
    prog.add_le(Affine.var(x), -1.0)
    prog.add_ge(Affine.var(x), 1.0)
    prog.maximize(Affine.var(x))
    assert conic.solve(prog, backend).status == "infeasible"


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        conic.solve(ConicProgram(), "nope")


def test_square_le_affine_encoding():
    # x^2 <= y with x fixed at 3: feasible iff y >= 9
    for y, ok in ((9.0, True), (10.0, True), (8.9, False)):
        prog = ConicProgram()
        v = prog.add_variable("v", 2)
        prog.add_convex_quadratic_le_affine([Affine.var(v[0])], Affine.var(v[1]))
        viol = prog.max_violation(np.array([3.0, y]))
        assert (viol <= 1e-12) == ok


def test_empty_terms_reduce_to_nonnegative_rhs():
    prog = ConicProgram()
    v = prog.add_variable("v")
    prog.add_convex_quadratic_le_affine([], Affine.var(v[0]))
    assert prog.max_violation(np.array([0.5])) == 0.0
    assert prog.max_violation(np.array([-0.5])) > 0.0


def test_complex_terms_match_direct_quadratic():
    rng = np.random.default_rng(0)
    n = 3
    a1, a2 = rng.standard_normal(n) + 1j * rng.standard_normal(n), rng.standard_normal(n) + 1j * rng.standard_normal(n)
    prog = ConicProgram()
    re, im, y = prog.add_variable("re", n), prog.add_variable("im", n), prog.add_variable("y")[0]
    t1 = ComplexAffine.linear(a1, re, im, 0.5 - 0.2j)
    t2 = ComplexAffine.linear(a2, re, im)
    prog.add_convex_quadratic_le_affine([t1, t2], Affine.var(y))
    (soc, _), = prog.socs
    for _ in range(100):
        x = rng.standard_normal(2 * n + 1)
        v = x[:n] + 1j * x[n:2 * n]
        quad = abs(a1 @ v + 0.5 - 0.2j) ** 2 + abs(a2 @ v) ** 2
        lhs = np.sqrt(sum(r.value(x) ** 2 for r in soc.rows))
        # ||[2u; y-1]||^2 - (y+1)^2 = 4(|u|^2 - y)
        assert lhs**2 - soc.t.value(x) ** 2 == pytest.approx(4 * (quad - x[-1]), rel=1e-10, abs=1e-10)


def test_rejects_non_affine_terms():
    prog = ConicProgram()
    v = prog.add_variable("v")
    with pytest.raises(TypeError):
        prog.add_convex_quadratic_le_affine([1.0], Affine.var(v[0]))
    with pytest.raises(IndexError):
        prog.add_le(Affine.var(5), 0.0)


def test_cbf_dump_mentions_every_cone():
    prog = as_program(*planted_socp(0)[:5])
    text = prog.to_cbf()
    assert text.startswith("VER\n3")
    assert "L+ 3" in text and "Q 3" in text and "Q 4" in text


@pytest.mark.parametrize("backend", BACKENDS)
def test_planted_socps(backend):
    """100 random SOCPs: feasibility by an independent evaluator and the planted optimum."""
    worst_viol, worst_gap = 0.0, 0.0
    for seed in range(100):
        c, G, h, n_lin, dims, _, opt = planted_socp(seed)
        res = conic.solve(as_program(c, G, h, n_lin, dims), backend)
        assert res.status == "optimal", (seed, res.status)
        worst_viol = max(worst_viol, independent_violation(G, h, n_lin, dims, res.x))
        worst_gap = max(worst_gap, abs(-res.objective_value - opt))
    assert worst_viol <= 1e-7
    assert worst_gap <= 1e-4


@pytest.mark.parametrize("seed", range(10))
def test_matches_general_nlp_oracle(seed):
    # the apex mode is left out: the cone is not differentiable there
    c, G, h, n_lin, dims, x0, opt = planted_socp(1000 + seed, modes=(0, 2))
    res = conic.solve(as_program(c, G, h, n_lin, dims), "python")

    def cons(x):
        s = h - G @ x
        out = list(s[:n_lin])
        start = n_lin
        for d in dims:
            out.append(s[start] - np.linalg.norm(s[start + 1:start + d]))
            start += d
        return np.array(out)

    best = None
    for k in range(8):
        start = x0 + 0.3 * np.random.default_rng(k).standard_normal(len(x0))
        r = optimize.minimize(lambda x: c @ x, start, jac=lambda x: c, method="SLSQP",
                              constraints=[{"type": "ineq", "fun": cons}], options={"ftol": 1e-12, "maxiter": 500})
        if r.success and np.min(cons(r.x)) > -1e-8 and (best is None or r.fun < best):
            best = r.fun
    assert best is not None
    assert -res.objective_value == pytest.approx(best, abs=1e-4)


def test_backends_agree_on_objective_scaling():
    c, G, h, n_lin, dims, _, opt = planted_socp(7)
    base = conic.solve(as_program(c, G, h, n_lin, dims), "python")
    scaled = conic.solve(as_program(3.0 * c, G, h, n_lin, dims), "python")
    assert scaled.objective_value == pytest.approx(3.0 * base.objective_value, rel=1e-6)
    assert np.allclose(scaled.x, base.x, atol=1e-5)


def test_downgrades_optimal_point_that_fails_recheck(monkeypatch):
    prog = as_program(*planted_socp(3)[:5])
    monkeypatch.setitem(conic._BACKENDS, "python", lambda *a, **k: ("optimal", np.full(prog.n, 1e3), 1))
    res = conic.solve(prog, "python")
    assert res.status == "numerical_failure" and res.max_violation > conic.VIOLATION_TOL


def test_backend_exception_becomes_status(monkeypatch):
    def boom(*a, **k):
        raise np.linalg.LinAlgError("singular")

    monkeypatch.setitem(conic._BACKENDS, "python", boom)
    assert conic.solve(as_program(*planted_socp(3)[:5]), "python").status == "numerical_failure"


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(2, 6), n_lin=st.integers(0, 4),
       dims=st.lists(st.integers(2, 5), min_size=1, max_size=3))
def test_ipm_planted_property(seed, n, n_lin, dims):
    c, G, h, n_lin, dims, _, opt = planted_socp(seed, n, n_lin, dims)
    status, x, _ = solve_socp(c, G, h, n_lin, dims)
    assert status == "optimal"
    assert independent_violation(G, h, n_lin, dims, x) <= 1e-7 * max(1.0, np.abs(h).max())
    assert c @ x == pytest.approx(opt, abs=1e-5 * max(1.0, abs(opt)))
