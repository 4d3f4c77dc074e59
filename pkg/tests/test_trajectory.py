import csv
import math

import numpy as np
import pytest

from dht.control import current_value_system, eliminate_control, pontryagin_system
from dht.corpus import canonical, log_ak, lq
from dht.mesh import hamiltonian_equations
from dht.parse import parse
from dht.trajectory import (
    ConvergenceError,
    SolverOptions,
    check_energy_identity,
    check_integral,
    evaluate_along,
    simulate,
    step,
    write_csv,
)


def lq_system(**kw):
    return eliminate_control(current_value_system(lq(**kw)))


def lq_reference(q0, p0, N, a=1.0, b=1.0, h=0.1, beta=0.95):
    q, p = [q0], [p0]
    for _ in range(N):
        pn = (p[-1] + h * a * q[-1]) / beta
        q.append(q[-1] + h * beta * pn / b)
        p.append(pn)
    return np.array(q), np.array(p)


def test_lq_matches_affine_map():
    traj = simulate(lq_system(), ([1.0], [-1.0]), 200)
    qr, pr = lq_reference(1.0, -1.0, 200)
    scale = 1 + np.max(np.abs(np.concatenate([qr, pr])))
    assert np.max(np.abs(traj.q[:, 0] - qr)) <= 1e-10 * scale
    assert np.max(np.abs(traj.p[:, 0] - pr)) <= 1e-10 * scale
    assert traj.max_relative_residual <= 1e-12


def test_present_and_current_agree():
    beta = 0.95
    ocp = lq()
    pv = eliminate_control(pontryagin_system(ocp))
    cv = eliminate_control(current_value_system(ocp))
    N = 100
    tc = simulate(cv, ([1.0], [-1.0]), N)
    tp = simulate(pv, ([1.0], [-1.0]), N)
    k = np.arange(N + 1)
    assert np.allclose(tp.q[:, 0], tc.q[:, 0], rtol=1e-11, atol=1e-12)
    assert np.allclose(tp.c[:, 0], beta ** k * tc.p[:, 0], rtol=1e-11, atol=1e-12)


def test_log_ak_costate_ratio():
    # the costate recursion is linear: p' = p / (beta (1 + h A))
    sys = eliminate_control(current_value_system(log_ak()))
    traj = simulate(sys, ([1.0], [1.0]), 5)
    ratio = traj.p[1:, 0] / traj.p[:-1, 0]
    assert np.allclose(ratio, 1 / (0.95 * (1 + 0.1 * 1.05)), rtol=1e-12)


def test_canonical_linear_integral():
    H, ctx = canonical("linear")
    sys = hamiltonian_equations(H, ctx)
    traj = simulate(sys, ([1.0], [2.0]), 100)
    rep = check_integral(traj, parse("q1[0]*p1[0]"))
    assert rep.passed and rep.max_total < 1e-10


def test_drift_detects_non_integral():
    traj = simulate(lq_system(), ([1.0], [1.0]), 20)
    assert not check_integral(traj, parse("q1[0]")).passed


def test_evaluate_along_offsets():
    traj = simulate(lq_system(), ([1.0], [1.0]), 10)
    vals, k0 = evaluate_along(traj, parse("q1[+1] - q1[0]"))
    assert k0 == 0 and len(vals) == 10
    assert np.allclose(vals, np.diff(traj.q[:, 0]))
    vals, k0 = evaluate_along(traj, parse("p1[-1]"))
    assert k0 == 1 and len(vals) == 10


def test_energy_identity_exact_for_linear_canonical():
    H, ctx = canonical("linear")
    sys = hamiltonian_equations(H, ctx)
    traj = simulate(sys, ([1.0], [2.0]), 100)
    assert check_energy_identity(traj, sys).passed


def test_step_and_options():
    sys = lq_system()
    t, qn, cn, iters, norm = step(sys, (0.0, [1.0], [1.0]))
    assert t == pytest.approx(0.1)
    qr, pr = lq_reference(1.0, 1.0, 1)
    assert qn[0] == pytest.approx(qr[1], rel=1e-12) and cn[0] == pytest.approx(pr[1], rel=1e-12)
    assert iters >= 1 and norm <= 1e-12 * (1 + abs(qn[0]) + abs(cn[0]))
    with pytest.raises(ValueError):
        SolverOptions(tol=0)
    with pytest.raises(ValueError):
        simulate(sys, ([1.0], [1.0]), 0)


def test_convergence_failure_reported():
    sys = eliminate_control(current_value_system(log_ak()))
    with pytest.raises(ConvergenceError):
        simulate(sys, ([1.0], [1.0]), 5, SolverOptions(max_iter=1))


def test_write_csv(tmp_path):
    traj = simulate(lq_system(), ([1.0], [1.0]), 5)
    path = tmp_path / "lq.csv"
    write_csv(traj, path, [parse("q1[0]*p1[0]"), parse("q1[+1]")])
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["k", "t", "q1", "p1", "I1", "I2"]
    assert len(rows) == 7
    assert rows[-1][5] == ""
    assert float(rows[1][2]) == 1.0


def test_energy_identity_is_first_order_in_h():
    rho = -math.log(0.95) / 0.1
    worst = []
    for k in range(4):
        h = 0.1 / 2 ** k
        sys = eliminate_control(current_value_system(lq(h=h, beta=math.exp(-rho * h))))
        traj = simulate(sys, ([1.0], [-1.0]), round(1 / h))
        worst.append(check_energy_identity(traj, sys).max_abs)
    ratios = [worst[i] / worst[i + 1] for i in range(3)]
    assert all(1.7 <= r <= 2.1 for r in ratios), ratios
