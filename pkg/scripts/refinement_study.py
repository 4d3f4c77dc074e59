"""Gap between the discrete LQ trajectory and its continuous limit as h shrinks.

The per-step discount is tied to a fixed rate, beta_h = exp(-rho h), so every
level discretizes the same continuous problem.
"""
import argparse
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from dht.control import current_value_system, eliminate_control
from dht.corpus import lq
from dht.trajectory import check_energy_identity, simulate


@dataclass
class Config:
    a: float = 1.0
    b: float = 1.0
    beta: float = 0.95
    h: float = 0.1
    horizon: float = 1.0
    levels: int = 5
    q0: float = 1.0
    p0: float = -1.0


def run(cfg: Config):
    rho = -math.log(cfg.beta) / cfg.h
    z0 = np.array([cfg.q0, cfg.p0])
    exact = expm(np.array([[0.0, 1 / cfg.b], [cfg.a, rho]]) * cfg.horizon) @ z0
    prev = None
    print(f"{'h':>10} {'gap':>12} {'ratio':>8} {'identity':>12}")
    for level in range(cfg.levels):
        h = cfg.h / 2 ** level
        sys = eliminate_control(current_value_system(lq(cfg.a, cfg.b, math.exp(-rho * h), h)))
        traj = simulate(sys, ([cfg.q0], [cfg.p0]), round(cfg.horizon / h))
        gap = float(np.max(np.abs([traj.q[-1, 0] - exact[0], traj.p[-1, 0] - exact[1]])))
        ident = check_energy_identity(traj, sys).max_abs
        ratio = "" if prev is None else f"{prev / gap:.3f}"
        print(f"{h:>10.5f} {gap:>12.4e} {ratio:>8} {ident:>12.4e}")
        prev = gap


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    for name, default in vars(Config()).items():
        ap.add_argument(f"--{name}", type=type(default), default=default)
    run(Config(**vars(ap.parse_args())))
