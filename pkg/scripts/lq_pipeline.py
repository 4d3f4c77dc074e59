"""Derive, solve and simulate the discounted LQ regulator end to end."""
import argparse
from dataclasses import dataclass
from pathlib import Path

from dht.control import current_value_system, eliminate_control
from dht.corpus import lq
from dht.symmetry import solve_determining
from dht.trajectory import SolverOptions, check_integral, simulate, write_csv


@dataclass
class Config:
    a: float = 1
    b: float = 1
    beta: str = "0.95"
    h: str = "0.1"
    degree: int = 2
    q0: float = 1.0
    p0: float = -1.0
    steps: int = 100
    out: str = "out"


def run(cfg: Config):
    sys = eliminate_control(current_value_system(lq(cfg.a, cfg.b, cfg.beta, cfg.h)))
    print("control: u1[0] =", sys.control[0])
    for eq in sys.state_equations() + sys.costate_equations():
        print(" ", eq)
    found = solve_determining(sys, cfg.degree)
    traj = simulate(sys, ([cfg.q0], [cfg.p0]), cfg.steps, SolverOptions(tol=1e-12))
    exprs = []
    for k, s in enumerate(found, start=1):
        e = s.integral.onshell
        exprs.append(e)
        print(f"I{k} = {e}")
        print("   ", check_integral(traj, e, 1e-8, relative=True))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(traj, out / "lq.csv", exprs)
    print("wrote", out / "lq.csv")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    for name, default in vars(Config()).items():
        ap.add_argument(f"--{name}", type=type(default), default=default)
    run(Config(**vars(ap.parse_args())))
