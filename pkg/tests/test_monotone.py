import dataclasses

import numpy as np
import pytest
from scipy.interpolate import CubicSpline

from monobvp import corpus
from monobvp.conditions import audit
from monobvp.linear import LinearProblem, MeshFunction, solve_linear
from monobvp.monotone import (Infeasible, InvariantViolation, MaxIterations, MonotoneError,
                              initial_iterates, iterate_once, nonlinear_residual,
                              reduce_lambda_zero, solve)
from monobvp.oracle import oracle_solve

from conftest import make_spec, power_spec

FEASIBLE = ["flat", "cylindrical", "spherical", "alpha3", "spherical_mm", "spherical_mm_flux"]


@pytest.fixture(scope="module")
def solved():
    return {name: solve(corpus.load(name)) for name in FEASIBLE}


# ---------------------------------------------------------------- initial iterates

def test_initial_iterates_spherical():
    spec = power_spec(2)
    u0, v0 = initial_iterates(spec, 1.0)
    x = spec.nodes
    assert np.max(np.abs(u0.values - (1 - x**2) / 6)) < 1e-13
    assert np.max(np.abs(v0.values - (x**2 - 1) / 6)) < 1e-13
    assert np.all(u0.values >= v0.values)


def test_initial_iterates_flat_inhomogeneous():
    spec = make_spec(gamma1=2.0)
    u0, v0 = initial_iterates(spec, 1.0)
    x = spec.nodes
    assert np.max(np.abs(u0.values - (2 + (1 - x**2) / 2))) < 1e-13
    assert np.max(np.abs(v0.values - (2 - (1 - x**2) / 2))) < 1e-13


def test_initial_iterates_degenerate():
    spec = make_spec(gamma1=0.7, beta1=0.3)
    u0, v0 = initial_iterates(spec, 0.0)
    assert np.array_equal(u0.values, v0.values)
    assert np.allclose(u0.values, 0.7, atol=1e-14)


# ---------------------------------------------------------------- one step

def test_zero_source_maps_to_zero():
    spec = make_spec()
    x = spec.nodes
    y = MeshFunction(x, np.sin(3 * x) + 0.2, np.concatenate([[0.0], np.cos(x[1:])]))
    out = iterate_once(spec, y, -0.5)
    # f = 0: -(y')' - lam y = -lam y_n; with lam = 0 the image is exactly zero
    out0 = iterate_once(spec, y, 0.0)
    assert np.max(np.abs(out0.values)) < 1e-14
    assert np.max(np.abs(out.values)) > 0


def test_source_independent_of_y_one_step():
    spec = power_spec(2, f="1")
    x = spec.nodes
    y = MeshFunction(x, np.cos(x), np.zeros_like(x))
    out = iterate_once(spec, y, 0.0)
    assert np.max(np.abs(out.values - (1 - x**2) / 6)) < 1e-13


def test_self_map_at_fixed_point(solved):
    for name in ("spherical", "cylindrical", "spherical_mm_flux"):
        res = solved[name]
        spec = corpus.load(name)
        u = res.trace.u_tilde
        img = iterate_once(spec, u, res.report.lambda_chosen)
        assert np.max(np.abs(img.values - u.values)) < 1e-8


def test_self_map_at_oracle_solution(solved):
    spec = corpus.load("spherical")
    res = solved["spherical"]
    ref = oracle_solve(spec, res.trace.u_tilde)
    x = spec.nodes
    y = CubicSpline(ref.solution.nodes, ref.solution.values)(x)
    w = CubicSpline(ref.solution.nodes, ref.solution.flux)(x)
    w[0] = 0.0
    ystar = MeshFunction(x, y, w)
    img = iterate_once(spec, ystar, res.report.lambda_chosen)
    assert np.max(np.abs(img.values - y)) < 1e-6


# ---------------------------------------------------------------- full runs

def test_trivial_problem_converges_in_one_step():
    res = solve(make_spec(phi="1", K1=0.0))
    assert res.trace.converged and res.trace.iterations == 1
    assert np.max(np.abs(res.trace.u_tilde.values)) < 1e-14
    assert res.collapsed


def test_spherical_example_against_oracle(solved):
    res = solved["spherical"]
    assert res.trace.converged
    assert res.bracket_width < 1e-7
    ref = oracle_solve(corpus.load("spherical"), res.trace.u_tilde)
    z = ref.resample(res.trace.u_tilde.nodes)
    assert np.max(np.abs(z - res.trace.u_tilde.values)) < 1e-6


@pytest.mark.parametrize("name", FEASIBLE)
def test_runtime_invariants_hold(solved, name):
    res = solved[name]
    t = res.trace
    for n in range(1, len(t.u_seq)):
        assert np.all(t.u_seq[n].values <= t.u_seq[n - 1].values + 1e-9)
        assert np.all(t.v_seq[n].values >= t.v_seq[n - 1].values - 1e-9)
        assert np.all(t.v_seq[n].values <= t.u_seq[n].values + 1e-9)
    assert all(s.monotone_u and s.monotone_v and s.ordered and s.flux_bound_ok for s in t.per_step)
    assert max(s.max_flux for s in t.per_step) < res.report.R0
    assert res.bracket_width >= -1e-9
    assert res.report.upper_defect_min >= -1e-9
    assert res.report.lower_defect_max <= 1e-9
    assert t.per_step[-1].residual < 1e-9 * 10
    assert nonlinear_residual(corpus.load(name), t.u_tilde) < 1e-8


@pytest.mark.parametrize("name", FEASIBLE)
def test_oracle_solution_is_bracketed(solved, name):
    res = solved[name]
    spec = corpus.load(name)
    ref = oracle_solve(spec, res.trace.u_tilde)
    z = ref.resample(spec.nodes)
    assert np.all(z >= res.trace.v_tilde.values - 1e-6)
    assert np.all(z <= res.trace.u_tilde.values + 1e-6)


def test_exponential_decay_traces():
    spec = make_spec(f="-exp(y)", phi="2", K1=-1.7, L1=0.0, N0=1.0)
    res = solve(spec)
    assert res.report.lambda_regime == "negative"
    t = res.trace
    for a, b in zip(t.u_seq, t.u_seq[1:]):
        assert np.all(b.values <= a.values + 1e-9)
    for a, b in zip(t.v_seq, t.v_seq[1:]):
        assert np.all(b.values >= a.values - 1e-9)
    ref = oracle_solve(spec, t.u_tilde)
    assert np.max(np.abs(ref.resample(spec.nodes) - t.u_tilde.values)) < 1e-6


def test_summary_fields(solved):
    s = solved["spherical_mm"].summary()
    assert s["converged"] and s["bracket"] == "collapsed"
    assert len(s["steps"]) == s["iterations"]


# ---------------------------------------------------------------- failures

def test_infeasible_raises_with_report():
    with pytest.raises(Infeasible) as info:
        solve(corpus.load("infeasible_L1"))
    assert info.value.report.failure == "no_feasible_lambda"


def test_swapped_iterates_violate_ordering():
    spec = corpus.load("spherical_mm")
    rep, (u0, v0) = audit(spec)
    with pytest.raises(InvariantViolation) as info:
        solve(spec, report=rep, iterates=(v0, u0))
    assert info.value.invariant == "ordering" and info.value.step == 0
    assert "invariant_violation(ordering" in str(info.value)


def test_flux_bound_violation_aborts():
    spec = corpus.load("spherical_mm")
    rep, its = audit(spec)
    tight = dataclasses.replace(rep, R0=1e-6)
    with pytest.raises(InvariantViolation) as info:
        solve(spec, report=tight, iterates=its)
    assert info.value.invariant == "flux_bound" and info.value.step == 1


def test_bad_lambda_breaks_monotonicity():
    # lam far above K1 destroys the sign structure of the iteration
    spec = corpus.load("flat")
    rep, its = audit(spec)
    bad = dataclasses.replace(rep, lambda_chosen=2.4)
    with pytest.raises(InvariantViolation) as info:
        solve(spec, report=bad, iterates=its)
    assert info.value.invariant in {"upper_nonincreasing", "lower_nondecreasing", "ordering"}
    assert 0 <= info.value.node <= spec.mesh_size


def test_max_iterations():
    with pytest.raises(MaxIterations, match="max_iterations"):
        solve(corpus.load("flat"), max_iter=2)


# ---------------------------------------------------------------- IVP reduction

def test_reduce_matches_linear_closed_form():
    spec = power_spec(2, f="1")
    y = reduce_lambda_zero(spec)
    x = spec.nodes
    assert np.max(np.abs(y.values - (1 - x**2) / 6)) < 1e-11
    assert np.max(np.abs(y.flux + x**3 / 3)) < 1e-11
    lin = solve_linear(LinearProblem(spec, 0.0, 1.0))
    assert np.max(np.abs(lin.values - y.values)) < 1e-11


def test_reduce_zero_source():
    y = reduce_lambda_zero(make_spec(gamma1=3.0, alpha1=2.0, beta1=0.5))
    assert np.allclose(y.values, 1.5, atol=1e-14) and np.all(y.flux == 0)


def test_reduce_flux_only_source():
    y = reduce_lambda_zero(make_spec(f="-w", gamma1=1.0))
    assert np.allclose(y.values, 1.0, atol=1e-14)
    assert np.max(np.abs(y.flux)) == 0.0


def test_reduce_rejects_y_dependence():
    with pytest.raises(MonotoneError):
        reduce_lambda_zero(make_spec(f="-y"))
