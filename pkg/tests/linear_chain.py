"""Chain along the x axis: every residual is linear, so batch least squares is exact.

With all rotations at identity the four residual kinds reduce to
``x_prev + T - x_curr``, ``x + b - o``, ``o_prev + c - o_curr`` and
``c_curr - c_prev`` on the translations.  Keeping every translation and every
residual on one axis makes the rotation gradients vanish exactly (lever arm
parallel to residual), so the optimizer never leaves that linear slice.  The
oracle solves the weighted linear problem directly with numpy, independent of
the graph code.
"""

import numpy as np

from slotwin.config import PipelineConfig
from slotwin.geometry import Pose
from slotwin.tracking import DYNAMIC, STATIC
from slotwin.window_graph import WindowGraph

SIG = {"odo": 0.05, "obs": 0.1, "chg": 0.02, "cons": 0.05}
LANDMARK, MOVER = 1, 2


def chain_config(**kw) -> PipelineConfig:
    cov = {f"cov_{k}": [s * s] * 6 for k, s in SIG.items()}
    return PipelineConfig(lm_cost_tol=0.0, lm_step_tol=1e-15, lm_max_iterations=100, **cov, **kw)


def make_chain(frames=30, seed=0):
    rng = np.random.default_rng(seed)
    ex = np.array([1.0, 0.0, 0.0])
    ego = np.outer(np.arange(frames), ex)
    landmark = 15.0 * ex
    mover = np.outer(5.0 + 1.3 * np.arange(frames), ex)

    def noise(kind):
        return rng.normal(0, SIG[kind]) * ex

    odo = [None] + [ego[t] - ego[t - 1] + noise("odo") for t in range(1, frames)]
    obs_l = [landmark - ego[t] + noise("obs") for t in range(frames)]
    obs_m = [mover[t] - ego[t] + noise("obs") for t in range(frames)]
    return {"frames": frames, "odo": odo, "obs_l": obs_l, "obs_m": obs_m}


def _tp(v):
    return Pose(np.eye(3), v)


def run_graph(chain, window=10, fixed_lag=True):
    cfg = chain_config(window=window, fixed_lag=fixed_lag)
    g = WindowGraph(cfg)
    for t in range(chain["frames"]):
        odo = None if t == 0 else _tp(chain["odo"][t])
        obs = [(LANDMARK, _tp(chain["obs_l"][t]), STATIC), (MOVER, _tp(chain["obs_m"][t]), DYNAMIC)]
        g.add_frame(t, odo, obs)
        if fixed_lag and len(g.frames) > window:
            g.slide()
        g.optimize()
    return g


def batch_solution(chain) -> dict:
    """Weighted least squares over all translations, ego frame 0 fixed at the origin."""
    n = chain["frames"]
    keys = [("X", t) for t in range(1, n)] + [("L", LANDMARK, 0)]
    keys += [("o", MOVER, t) for t in range(n)] + [("c", MOVER, t) for t in range(1, n)]
    col = {k: 3 * i for i, k in enumerate(keys)}
    rows, rhs = [], []

    def add(terms, const, sigma):
        # sum(coef * var) + const = 0, weighted by 1/sigma
        for axis in range(3):
            row = np.zeros(3 * len(keys))
            for coef, key in terms:
                if key in col:
                    row[col[key] + axis] += coef
            rows.append(row / sigma)
            rhs.append(-const[axis] / sigma)

    zero = np.zeros(3)
    for t in range(1, n):
        add([(1, ("X", t - 1)), (-1, ("X", t))], chain["odo"][t], SIG["odo"])
    for t in range(n):
        add([(1, ("X", t)), (-1, ("L", LANDMARK, 0))], chain["obs_l"][t], SIG["obs"])
        add([(1, ("X", t)), (-1, ("o", MOVER, t))], chain["obs_m"][t], SIG["obs"])
    for t in range(1, n):
        add([(1, ("o", MOVER, t - 1)), (1, ("c", MOVER, t)), (-1, ("o", MOVER, t))], zero, SIG["chg"])
    for t in range(2, n):
        add([(1, ("c", MOVER, t)), (-1, ("c", MOVER, t - 1))], zero, SIG["cons"])
    x = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)[0]
    return {k: x[col[k]:col[k] + 3] for k in keys}
