"""A generator that passes the current-value invariance check without a conserved integral.

For the LQ regulator the direction zeta = c, B = q leaves the residual
D+(q) (c (1 - beta) - 1), which vanishes at c = 1/(1 - beta).  The
resulting I = -q is plainly not constant along trajectories.
"""
import argparse
from dataclasses import dataclass

from dht.control import current_value_system, eliminate_control
from dht.corpus import lq
from dht.expr import ZERO, Const, q
from dht.symmetry import (
    Generator,
    NotConserved,
    determining_system,
    first_integral,
    invariance_residual_current,
    onshell_reduce,
)
from dht.trajectory import check_integral, simulate


@dataclass
class Config:
    beta: str = "0.95"
    h: str = "0.1"
    steps: int = 20
    degree: int = 1


def run(cfg: Config):
    sys = eliminate_control(current_value_system(lq(beta=cfg.beta, h=cfg.h)))
    exact = sys.with_parameters()
    c = 1 / (1 - exact.ctx.beta)
    g = Generator(ZERO, (ZERO,), (Const(c),), q(1))
    print("generator:", g)
    print("residual:", invariance_residual_current(sys, g))
    print("on-shell:", exact.bind(onshell_reduce(invariance_residual_current(exact, g), exact).expr))
    try:
        first_integral(exact, g)
    except NotConserved as err:
        print("rejected:", err)
    fi = first_integral(exact, g, check_conservation=False)
    traj = simulate(exact, ([1.0], [1.0]), cfg.steps)
    print("I =", fi.onshell, "|", check_integral(traj, fi.onshell))

    ds = determining_system(sys, cfg.degree)
    print(f"degree {cfg.degree}: kernel {len(ds.kernel)}, conserved {len(ds.sound)}, rejected {len(ds.rejected)}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    for name, default in vars(Config()).items():
        ap.add_argument(f"--{name}", type=type(default), default=default)
    run(Config(**vars(ap.parse_args())))
