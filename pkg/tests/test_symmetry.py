import random

import pytest
from hypothesis import given, settings, strategies as st

from dht.control import current_value_system, eliminate_control
from dht.corpus import CANONICAL, canonical, log_ak, lq
from dht.expr import ZERO, Add, Const, Mul, p, q
from dht.mesh import hamiltonian_equations
from dht.normalize import equivalent, is_zero, normalize
from dht.parse import parse
from dht.symmetry import (
    Generator,
    NotConserved,
    SymmetryError,
    apply_operator,
    determining_system,
    first_integral,
    invariance_residual_current,
    invariance_residual_standard,
    onshell_reduce,
    prolong,
    solve_determining,
    step_map,
)
from dht.trajectory import check_integral, simulate


def lq_sys():
    return eliminate_control(current_value_system(lq()))


def gen(xi="0", eta=("0",), zeta=("0",), B="0"):
    return Generator(parse(xi), tuple(map(parse, eta)), tuple(map(parse, zeta)), parse(B))


def test_prolongation_shifts_coefficients():
    g = gen(eta=("t*q1[0]",), zeta=("p1[0]",))
    pr = prolong(g)
    assert pr.eta[1][0] == normalize(parse("(t + h)*q1[+1]"))


def test_apply_operator():
    g = gen(eta=("q1[0]",), zeta=("-p1[0]",))
    assert apply_operator(g, parse("q1[0]*p1[0]")) == ZERO
    assert apply_operator(g, parse("q1[+1]")) == parse("q1[+1]")


def test_scaling_of_linear_canonical():
    H, ctx = canonical("linear")
    g = gen(eta=("q1[0]",), zeta=("-p1[0]",))
    sys = hamiltonian_equations(H, ctx)
    # off-shell the residual carries q1[+1]; it vanishes on the equations of motion
    assert invariance_residual_standard(H, g) != ZERO
    assert onshell_reduce(invariance_residual_standard(H, g), sys).expr == ZERO
    fi = first_integral(sys.with_parameters(), g)
    assert fi.onshell == normalize(parse("q1[0]*p1[0]"))


def test_gauge_generator_on_lq():
    sys = lq_sys().with_parameters()
    fi = first_integral(sys, Generator.zero(1, Const(1)))
    assert fi.I == Const(-1)


def test_wrong_generator_rejected():
    sys = lq_sys().with_parameters()
    with pytest.raises(SymmetryError):
        first_integral(sys, gen(eta=("1",)))


def test_counterexample_passes_residual_but_not_conservation():
    # zeta = 1/(1-beta), B = q: residual D(q)(c(1-beta) - 1) vanishes, I = -q drifts
    sys = lq_sys().with_parameters()
    g = gen(zeta=("20",), B="q1[0]")
    red = sys.bind(onshell_reduce(invariance_residual_current(sys, g), sys).expr)
    assert red == ZERO
    with pytest.raises(NotConserved):
        first_integral(sys, g)
    fi = first_integral(sys, g, check_conservation=False)
    traj = simulate(sys, ([1.0], [1.0]), 20)
    assert not check_integral(traj, fi.onshell).passed


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(-3, 3))
def test_residual_linear_in_generator(seed, c):
    rng = random.Random(seed)
    terms = ["1", "q1[0]", "p1[0]", "t", "q1[0]*p1[0]", "q1[0]^2"]
    pick = lambda: "+".join(f"{rng.randint(-2, 2)}*{rng.choice(terms)}" for _ in range(2))
    g1 = gen(pick(), (pick(),), (pick(),), pick())
    g2 = gen(pick(), (pick(),), (pick(),), pick())
    sys = lq_sys()
    lhs = invariance_residual_current(sys, g1 + g2.scaled(c))
    rhs = Add((invariance_residual_current(sys, g1), Mul((Const(c), invariance_residual_current(sys, g2)))))
    assert is_zero(Add((lhs, Mul((Const(-1), rhs)))))


@pytest.mark.parametrize("name", sorted(CANONICAL))
def test_specialization_structural(name):
    H, ctx = canonical(name)
    sys = hamiltonian_equations(H, ctx)
    eta = tuple("q%d[0]*p%d[0]" % (i, i) for i in range(1, ctx.n + 1))
    zeta = tuple("t*q%d[0]" % i for i in range(1, ctx.n + 1))
    g = gen("0", eta, zeta, "q1[0]^2")
    assert invariance_residual_current(sys, g) == invariance_residual_standard(H, g)


def test_step_map_linear_coupled():
    H, ctx = canonical("rotation")
    sm = step_map(hamiltonian_equations(H, ctx))
    assert sm is not None and len(sm) == 4


def test_solve_linear_canonical():
    H, ctx = canonical("linear")
    found = solve_determining(hamiltonian_equations(H, ctx), 1)
    integrals = [s.integral.onshell for s in found]
    assert normalize(parse("q1[0]*p1[0]")) in integrals


def test_solve_rotation_angular_momentum():
    H, ctx = canonical("rotation")
    found = solve_determining(hamiltonian_equations(H, ctx), 1)
    L = parse("q1[0]*p2[0] - q2[0]*p1[0]")
    assert any(equivalent(s.integral.onshell, L) or equivalent(s.integral.onshell, Mul((Const(-1), L)))
               for s in found)


def test_solve_lq_degree1():
    ds = determining_system(lq_sys(), 1)
    assert len(ds.kernel) == len(ds.sound) + len(ds.rejected)
    assert ds.rejected  # counterexample directions exist
    found = solve_determining(lq_sys(), 1)
    assert [s.integral.I for s in found] == [Const(-1)]


def test_solve_log_ak():
    found = solve_determining(eliminate_control(current_value_system(log_ak())), 1)
    assert len(found) == 2
    traj = simulate(eliminate_control(current_value_system(log_ak())), ([1.0], [1.0]), 30)
    for s in found:
        assert check_integral(traj, s.integral.onshell, 1e-8, relative=True).passed


def test_solve_is_deterministic():
    H, ctx = canonical("oscillator")
    sys = hamiltonian_equations(H, ctx)
    a = [str(s.integral.I) for s in solve_determining(sys, 2)]
    b = [str(s.integral.I) for s in solve_determining(sys, 2)]
    assert a == b


def test_generator_validation():
    with pytest.raises(ValueError):
        Generator(ZERO, (q(1, 1),), (ZERO,))
    with pytest.raises(ValueError):
        Generator(ZERO, (ZERO,), ())
    g = gen(eta=("p1[0]",)).with_costate("lam")
    assert "lam1[0]" in str(g)
    assert p(1) not in {s for s in (g.eta[0],)}
