"""Sliding-window factor graph over ego poses, object poses and object pose changes.

Every residual in the graph has the form ``log(B^-1 * A * M)``:

=========  =========  =========  =====================
factor     A          B          M
=========  =========  =========  =====================
odometry   X_{t-1}    X_t        T (measured)
observe    X_t        o_t        b (measured)
change     o_{t-1}    o_t        c_t (variable)
constvel   c_t        c_{t-1}    identity
=========  =========  =========  =====================

which is ``log(((X_{t-1}^-1 X_t)^-1 T)``, ``log((X^-1 o)^-1 b)``,
``log((o_{t-1}^-1 o_t)^-1 c)`` and ``log(c_{t-1}^-1 c_t)`` respectively.
Costs are sums of squared Mahalanobis norms (no 1/2 factor).
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .config import PipelineConfig
from .geometry import (
    Pose,
    se3_adjoint,
    se3_inv,
    se3_log,
    se3_exp,
    se3_right_jacobian_inv,
)
from .tracking import DYNAMIC, STATIC, Track

log = logging.getLogger(__name__)

KINDS = ("odo", "obs", "chg", "cons")
_EYE4 = np.eye(4)


class GraphError(RuntimeError):
    pass


class RankDeficiencyError(np.linalg.LinAlgError):
    def __init__(self, variables, message="normal equations are rank deficient"):
        self.variables = list(variables)
        super().__init__(f"{message}; offending variables: {self.variables}")


def relative_residual(A, B, M):
    """``log(B^-1 A M)`` and its Jacobians w.r.t. right perturbations of A, B, M.

    Works on single 4x4 matrices or stacks of them.
    """
    E = se3_inv(B) @ A @ M
    r = se3_log(E)
    Jri = se3_right_jacobian_inv(r)
    JA = Jri @ se3_adjoint(se3_inv(M))
    JB = -Jri @ se3_adjoint(se3_inv(E))
    return r, JA, JB, Jri


def _m(p):
    return p.matrix() if isinstance(p, Pose) else np.asarray(p, dtype=float)


def residual_odometry(X_prev, X_curr, T) -> np.ndarray:
    return relative_residual(_m(X_prev), _m(X_curr), _m(T))[0]


def residual_observation(X, o, b) -> np.ndarray:
    return relative_residual(_m(X), _m(o), _m(b))[0]


def residual_pose_change(o_prev, o_curr, c) -> np.ndarray:
    return relative_residual(_m(o_prev), _m(o_curr), _m(c))[0]


def residual_constant_velocity(c_prev, c_curr) -> np.ndarray:
    return relative_residual(_m(c_curr), _m(c_prev), _EYE4)[0]


def residual_jacobians(kind: str, *poses):
    """Residual and Jacobians for each variable, in the residual's argument order.

    odo: (X_prev, X_curr | T), obs: (X, o | b), chg: (o_prev, o_curr, c), cons: (c_prev, c_curr).
    Measurements (after ``|``) are passed but get no Jacobian.
    """
    m = [_m(p) for p in poses]
    if kind in ("odo", "obs"):
        r, JA, JB, _ = relative_residual(m[0], m[1], m[2])
        return r, [JA, JB]
    if kind == "chg":
        r, JA, JB, JM = relative_residual(m[0], m[1], m[2])
        return r, [JA, JB, JM]
    if kind == "cons":
        r, JA, JB, _ = relative_residual(m[1], m[0], _EYE4)
        return r, [JB, JA]
    raise ValueError(f"unknown factor kind {kind!r}")


def classify_motion(track: Track, threshold: float) -> str:
    """Static iff every pair of in-window positions is closer than ``threshold`` (planar)."""
    _, xy = track.positions()
    diff = xy[:, None, :] - xy[None, :, :]
    span = float(np.sqrt(np.einsum("ijk,ijk->ij", diff, diff).max())) if len(xy) else 0.0
    return STATIC if span < threshold else DYNAMIC


@dataclass
class Factor:
    kind: str
    a: tuple
    b: tuple
    m: tuple | None = None  # variable key, for the pose-change factor
    meas: np.ndarray | None = None  # fixed 4x4 measurement otherwise

    @property
    def keys(self):
        return (self.a, self.b) if self.m is None else (self.a, self.b, self.m)


@dataclass
class MarginalPrior:
    """Dense linearized prior ``|| r0 + J * boxminus(x, x_lin) ||^2`` on a set of variables."""

    keys: list
    lin_points: np.ndarray  # (n, 4, 4)
    J: np.ndarray  # (m, 6n)
    r0: np.ndarray  # (m,)

    def deltas(self, values) -> np.ndarray:
        X = np.stack([values[k] for k in self.keys])
        return se3_log(se3_inv(self.lin_points) @ X)

    def linearize(self, values):
        d = self.deltas(values)
        r = self.r0 + self.J @ d.reshape(-1)
        Jri = se3_right_jacobian_inv(d)
        n = len(self.keys)
        J = (self.J.reshape(-1, n, 6)[:, :, None, :] @ Jri[None]).reshape(-1, n * 6)
        return r, J

    def residual(self, values) -> np.ndarray:
        return self.r0 + self.J @ self.deltas(values).reshape(-1)


@dataclass
class _Chain:
    kind: str
    last_frame: int | None = None
    last_obj: tuple | None = None
    last_change: tuple | None = None
    frames: int = 0  # consecutive frames this object has been in the graph


@dataclass
class OptimizeResult:
    initial_cost: float
    cost: float
    iterations: int
    converged: bool
    reason: str
    history: list = field(default_factory=list)


class _Layout:
    """Block pattern of the normal equations for fixed factors and free keys.

    Each 6x6 Jacobian product lands in one slot of the BSR data array; the
    scatter matrices sum all of them with a single sparse product, so the
    pattern is analysed once per solve instead of once per iteration.
    """

    def __init__(self, groups, keys, prior_keys=None):
        n = len(keys)
        index = {k: i for i, k in enumerate(keys)}
        self.n = n
        self.plan = []  # (kind, facs, [(p, q, sel)], [(p, sel)])
        bi, bj, gi = [], [], []
        for kind, facs in groups:
            roles = [[f.a for f in facs], [f.b for f in facs]]
            if kind == "chg":
                roles.append([f.m for f in facs])
            idx = [np.array([index.get(k, -1) for k in r]) for r in roles]
            pairs, grads = [], []
            for p, ip in enumerate(idx):
                sel_p = np.flatnonzero(ip >= 0)
                if not len(sel_p):
                    continue
                grads.append((p, sel_p))
                gi.append(ip[sel_p])
                for q, iq in enumerate(idx):
                    sel = np.flatnonzero((ip >= 0) & (iq >= 0))
                    if len(sel):
                        pairs.append((p, q, sel))
                        bi.append(ip[sel])
                        bj.append(iq[sel])
            self.plan.append((kind, facs, pairs, grads))
        self.prior_idx = None
        if prior_keys is not None:
            pidx = np.array([index[k] for k in prior_keys])
            self.prior_idx = pidx
            bi.append(np.repeat(pidx, len(pidx)))
            bj.append(np.tile(pidx, len(pidx)))
            gi.append(pidx)
        diag = np.arange(n) * (n + 1)
        flat = np.concatenate(bi) * n + np.concatenate(bj) if bi else np.zeros(0, int)
        uniq, inv = np.unique(np.concatenate([diag, flat]), return_inverse=True)
        inv = inv[n:]
        self.indices = uniq % n
        self.indptr = np.searchsorted(uniq // n, np.arange(n + 1))
        self.diag = np.searchsorted(uniq, diag)
        self.scatter = sp.csr_matrix((np.ones(len(inv)), (inv, np.arange(len(inv)))), shape=(len(uniq), len(inv)))
        gi = np.concatenate(gi) if gi else np.zeros(0, int)
        self.gather = sp.csr_matrix((np.ones(len(gi)), (gi, np.arange(len(gi)))), shape=(n, len(gi)))


class WindowGraph:
    """Fixed-lag factor graph.  Frames are added in order with :meth:`add_frame`."""

    def __init__(self, config: PipelineConfig | None = None, initial_pose: Pose | None = None):
        self.config = config or PipelineConfig()
        self.initial_pose = initial_pose or Pose.identity()
        self.values: dict = {}
        self.fixed: set = set()
        self.factors: list[Factor] = []
        self.prior: MarginalPrior | None = None
        self.frames: list[int] = []
        self.frame_vars: dict[int, list] = {}
        self.chains: dict[int, _Chain] = {}
        self._landmark_gen: dict[int, int] = defaultdict(int)
        self._sqrt_info = {k: self.config.sqrt_information(k) for k in KINDS}
        self.departed: dict = {}  # key -> final 4x4 estimate when it left the window

    # ------------------------------------------------------------------ building
    def _add_var(self, key, value, frame=None):
        self.values[key] = np.array(value, dtype=float)
        if frame is not None:
            self.frame_vars.setdefault(frame, []).append(key)

    def pose(self, key) -> Pose:
        return Pose.from_matrix(self.values[key])

    def ego_key(self, frame: int):
        return ("X", frame)

    def add_frame(self, frame: int, odometry: Pose | None = None, observations=()) -> None:
        """Add ego vertex for ``frame`` and wire in its object observations.

        ``observations`` holds ``(object_id, detection Pose in ego frame, motion class)``
        for initialized objects only.
        """
        xk = ("X", frame)
        if not self.frames:
            self._add_var(xk, self.initial_pose.matrix(), frame)
            self.fixed.add(xk)
        else:
            prev = self.frames[-1]
            if frame <= prev:
                raise GraphError(f"frame {frame} added after frame {prev}")
            if odometry is None:
                raise GraphError(f"missing odometry for frame {frame}")
            T = _m(odometry)
            self._add_var(xk, self.values[("X", prev)] @ T, frame)
            self.factors.append(Factor("odo", ("X", prev), xk, meas=T.copy()))
        self.frames.append(frame)
        if self.config.use_objects:
            for obj_id, b, motion in observations:
                self._add_observation(frame, obj_id, _m(b), motion)

    def _add_observation(self, frame, obj_id, b, motion):
        xk = ("X", frame)
        o_init = self.values[xk] @ b
        chain = self.chains.get(obj_id)
        if motion == STATIC:
            if chain is not None and chain.kind == STATIC and chain.last_obj in self.values:
                lk = chain.last_obj
            else:
                gen = self._landmark_gen[obj_id]
                self._landmark_gen[obj_id] += 1
                lk = ("L", obj_id, gen)
                self._add_var(lk, o_init)
                chain = self.chains[obj_id] = _Chain(STATIC, last_obj=lk)
            self.factors.append(Factor("obs", xk, lk, meas=b.copy()))
            chain.last_frame = frame
            chain.frames += 1
            return

        ok = ("o", obj_id, frame)
        self._add_var(ok, o_init, frame)
        self.factors.append(Factor("obs", xk, ok, meas=b.copy()))
        prev_frame = self.frames[-2] if len(self.frames) > 1 else None
        continues = (
            chain is not None
            and chain.kind == DYNAMIC
            and chain.last_frame == prev_frame
            and chain.last_obj in self.values
        )
        if not continues:
            self.chains[obj_id] = _Chain(DYNAMIC, frame, ok, None, 1)
            return
        prev_o = chain.last_obj
        ck = ("c", obj_id, frame)
        self._add_var(ck, se3_inv(self.values[prev_o]) @ self.values[ok], frame)
        self.factors.append(Factor("chg", prev_o, ok, m=ck))
        if chain.last_change is not None and chain.last_change in self.values:
            self.factors.append(Factor("cons", ck, chain.last_change, meas=_EYE4))
        chain.last_frame, chain.last_obj, chain.last_change = frame, ok, ck
        chain.frames += 1

    # ------------------------------------------------------------------ evaluation
    def _free_keys(self):
        return [k for k in self.values if k not in self.fixed]

    def _group(self, factors):
        groups = defaultdict(list)
        for f in factors:
            groups[f.kind].append(f)
        return groups

    def _eval_group(self, kind, facs, values, jacobians=True):
        """Whitened residuals ``(n, 6)`` and Jacobians w.r.t. A, B (and M for changes)."""
        A = np.stack([values[f.a] for f in facs])
        B = np.stack([values[f.b] for f in facs])
        if kind == "chg":
            M = np.stack([values[f.m] for f in facs])
        else:
            M = np.stack([f.meas for f in facs])
        S = self._sqrt_info[kind]
        if not jacobians:
            r = se3_log(se3_inv(B) @ A @ M)
            return r @ S.T, None
        r, JA, JB, JM = relative_residual(A, B, M)
        js = [S @ JA, S @ JB] + ([S @ JM] if kind == "chg" else [])
        return r @ S.T, js

    def residuals(self, values=None, kinds=KINDS) -> dict:
        """Unwhitened residual vectors per factor kind, in factor order."""
        values = self.values if values is None else values
        out = {}
        for kind, facs in self._group(self.factors).items():
            if kind in kinds:
                A = np.stack([values[f.a] for f in facs])
                B = np.stack([values[f.b] for f in facs])
                M = np.stack([values[f.m] if f.m else f.meas for f in facs])
                out[kind] = se3_log(se3_inv(B) @ A @ M)
        return out

    def cost(self, values=None) -> float:
        values = self.values if values is None else values
        total = 0.0
        for kind, facs in self._group(self.factors).items():
            r, _ = self._eval_group(kind, facs, values, jacobians=False)
            total += float(np.einsum("ij,ij->", r, r))
        if self.prior is not None:
            rp = self.prior.residual(values)
            total += float(rp @ rp)
        return total

    def _normal_equations(self, layout: _Layout, values):
        """Gauss-Newton ``H`` (BSR, 6x6 blocks) and gradient ``g = J^T r``."""
        blocks, grads = [], []
        for kind, facs, pairs, gsel in layout.plan:
            r, js = self._eval_group(kind, facs, values)
            Jt = [J.transpose(0, 2, 1) for J in js]
            for p, q, sel in pairs:
                blocks.append(Jt[p][sel] @ js[q][sel])
            for p, sel in gsel:
                grads.append((Jt[p][sel] @ r[sel][:, :, None])[:, :, 0])
        if layout.prior_idx is not None:
            rp, Jp = self.prior.linearize(values)
            m = len(layout.prior_idx)
            Hp = (Jp.T @ Jp).reshape(m, 6, m, 6).transpose(0, 2, 1, 3)
            blocks.append(Hp.reshape(-1, 6, 6))
            grads.append((Jp.T @ rp).reshape(m, 6))
        n = layout.n
        if blocks:
            data = layout.scatter @ np.concatenate(blocks).reshape(-1, 36)
            g = (layout.gather @ np.concatenate(grads)).reshape(-1)
        else:
            data, g = np.zeros((len(layout.indices), 36)), np.zeros(6 * n)
        H = sp.bsr_matrix((data.reshape(-1, 6, 6), layout.indices, layout.indptr), shape=(6 * n, 6 * n))
        return H, g

    # ------------------------------------------------------------------ solving
    def _check_rank(self, H, layout, keys):
        if not keys:
            return
        ev = np.linalg.eigvalsh(H.data[layout.diag])
        scale = max(float(ev.max()), 1e-300)
        bad = [keys[i] for i in np.flatnonzero(ev[:, 0] <= 1e-14 * scale)]
        if bad:
            raise RankDeficiencyError(bad)

    @staticmethod
    def _solve(H, damping, rhs, keys):
        # H is symmetric positive definite: symmetric ordering, no pivoting
        try:
            lu = spla.splu(H + sp.diags(damping, format="csc"), permc_spec="MMD_AT_PLUS_A",
                           diag_pivot_thresh=0.0, options={"SymmetricMode": True})
            return lu.solve(rhs)
        except RuntimeError as exc:
            raise RankDeficiencyError(keys, f"normal equations are singular ({exc})") from None

    def optimize(self, max_iterations=None, cost_tol=None, step_tol=None) -> OptimizeResult:
        cfg = self.config
        max_iterations = cfg.lm_max_iterations if max_iterations is None else max_iterations
        cost_tol = cfg.lm_cost_tol if cost_tol is None else cost_tol
        step_tol = cfg.lm_step_tol if step_tol is None else step_tol
        keys = self._free_keys()
        cost = self.cost()
        result = OptimizeResult(cost, cost, 0, True, "no free variables", [cost])
        if not keys or (not self.factors and self.prior is None):
            return result
        if cost < 1e-24:
            result.reason = "initial cost below floor"
            return result
        layout = _Layout(self._group(self.factors).items(), keys,
                         None if self.prior is None else self.prior.keys)
        lam = cfg.lm_lambda
        it = 0
        checked = False
        need_linearize = True
        while it < max_iterations:
            if need_linearize:
                H, g = self._normal_equations(layout, self.values)
                if not checked:
                    self._check_rank(H, layout, keys)
                    checked = True
                diag = np.einsum("bii->bi", H.data[layout.diag]).reshape(-1)
                # symmetric, so the CSR arrays read as CSC describe the same matrix
                csr = H.tocsr()
                H = sp.csc_matrix((csr.data, csr.indices, csr.indptr), shape=csr.shape)
                need_linearize = False
            it += 1
            dx = self._solve(H, lam * diag, -g, keys)
            if not np.all(np.isfinite(dx)):
                raise RankDeficiencyError(keys, "non-finite step")
            steps = se3_exp(dx.reshape(-1, 6))
            trial = dict(self.values)
            for i, k in enumerate(keys):
                trial[k] = self.values[k] @ steps[i]
            new_cost = self.cost(trial)
            step_norm = float(np.abs(dx).max())
            if new_cost < cost:
                rel = (cost - new_cost) / max(cost, 1e-300)
                self.values = trial
                cost = new_cost
                result.history.append(cost)
                lam = max(lam / 10.0, 1e-12)
                need_linearize = True
                if cost < 1e-24:
                    result.reason = "cost below floor"
                    break
                if rel < cost_tol:
                    result.reason = "relative cost change"
                    break
                if step_norm < step_tol:
                    result.reason = "step size"
                    break
            else:
                if step_norm < step_tol:
                    result.reason = "step size"
                    break
                lam *= 10.0
                if lam > 1e16:
                    result.reason = "damping limit"
                    break
        else:
            result.converged = False
            result.reason = "max iterations"
        result.cost = cost
        result.iterations = it
        return result

    # ------------------------------------------------------------------ marginalization
    def _factor_touches(self, f, keyset):
        return any(k in keyset for k in f.keys)

    def slide(self) -> list:
        """Marginalize the oldest frame's variables into the dense prior.

        Returns the keys that left the window.
        """
        if not self.frames:
            return []
        f0 = self.frames[0]
        depart = set(self.frame_vars.get(f0, []))
        leaving = [f for f in self.factors if self._factor_touches(f, depart)]
        leaving_ids = {id(f) for f in leaving}
        # landmarks whose every factor leaves with this frame go too
        by_var = defaultdict(list)
        for f in self.factors:
            for k in f.keys:
                by_var[k].append(f)
        for k in list(self.values):
            if k[0] == "L" and by_var[k] and all(id(f) in leaving_ids for f in by_var[k]):
                depart.add(k)
        self._marginalize(depart, leaving)
        for k in depart:
            self.departed[k] = self.values.pop(k)
            self.fixed.discard(k)
        self.factors = [f for f in self.factors if id(f) not in leaving_ids]
        self.frames.pop(0)
        self.frame_vars.pop(f0, None)
        return sorted(depart, key=repr)

    def _marginalize(self, depart, factors):
        involved = []
        seen = set()
        for f in factors:
            for k in f.keys:
                if k not in seen:
                    seen.add(k)
                    involved.append(k)
        if self.prior is not None:
            for k in self.prior.keys:
                if k not in seen:
                    seen.add(k)
                    involved.append(k)
        free = [k for k in involved if k not in self.fixed]
        drop = [k for k in free if k in depart]
        keep = [k for k in free if k not in depart]
        if not keep:
            self.prior = None
            return
        keys = drop + keep
        layout = _Layout(self._group(factors).items(), keys,
                         None if self.prior is None else self.prior.keys)
        H, g = self._normal_equations(layout, self.values)
        H = H.toarray()
        nd = 6 * len(drop)
        Hdd, Hdk, Hkk = H[:nd, :nd], H[:nd, nd:], H[nd:, nd:]
        gd, gk = g[:nd], g[nd:]
        if nd:
            w, V = np.linalg.eigh(Hdd)
            inv_w = np.where(w > 1e-12 * max(w.max(), 1e-300), 1.0 / np.where(w > 0, w, 1.0), 0.0)
            Hdd_inv = (V * inv_w) @ V.T
            Hs = Hkk - Hdk.T @ Hdd_inv @ Hdk
            gs = gk - Hdk.T @ Hdd_inv @ gd
        else:
            Hs, gs = Hkk, gk
        Hs = 0.5 * (Hs + Hs.T)
        w, V = np.linalg.eigh(Hs)
        keep_ev = w > 1e-12 * max(w.max(), 1e-300)
        w, V = w[keep_ev], V[:, keep_ev]
        sw = np.sqrt(w)
        self.prior = MarginalPrior(
            keys=keep,
            lin_points=np.stack([self.values[k] for k in keep]),
            J=(sw[:, None] * V.T),
            r0=(V.T @ gs) / sw,
        )

    # ------------------------------------------------------------------ queries
    def counts(self) -> dict:
        kinds = defaultdict(int)
        for f in self.factors:
            kinds[f.kind] += 1
        verts = defaultdict(int)
        for k in self.values:
            verts[k[0]] += 1
        return {
            "ego": verts["X"],
            "object": verts["o"] + verts["L"],
            "landmark": verts["L"],
            "change": verts["c"],
            **{f"factor_{k}": kinds[k] for k in KINDS},
        }

    def object_sets(self, frame: int) -> dict:
        """Object ids in O^init, O^aso and O^cons at ``frame``."""
        init, aso, cons = set(), set(), set()
        for f in self.factors:
            if f.kind == "obs" and f.a == ("X", frame):
                init.add(f.b[1])
            elif f.kind == "chg" and f.b[2] == frame:
                aso.add(f.b[1])
            elif f.kind == "cons" and f.a[2] == frame:
                cons.add(f.a[1])
        return {"init": init, "aso": aso, "cons": cons}

    def snapshot(self) -> dict:
        res = {}
        for kind, facs in self._group(self.factors).items():
            r, _ = self._eval_group(kind, facs, self.values, jacobians=False)
            res[kind] = iter(np.einsum("ij,ij->i", r, r))
        factors = []
        raw = {}
        for kind, facs in self._group(self.factors).items():
            raw[kind] = iter(self.residuals(kinds=(kind,))[kind])
        for f in self.factors:
            factors.append({
                "kind": f.kind,
                "vertices": [_key_str(k) for k in f.keys],
                "residual": [float(x) for x in next(raw[f.kind])],
                "cost": float(next(res[f.kind])),
            })
        return {
            "frames": list(self.frames),
            "vertices": {
                _key_str(k): {"pose": [float(x) for x in v[:3].reshape(-1)], "fixed": k in self.fixed}
                for k, v in self.values.items()
            },
            "factors": factors,
            "prior": None if self.prior is None else {
                "vertices": [_key_str(k) for k in self.prior.keys],
                "rank": int(self.prior.J.shape[0]),
                "cost": float(self.prior.residual(self.values) @ self.prior.residual(self.values)),
            },
            "cost": self.cost(),
        }


def _key_str(key) -> str:
    return ":".join(str(p) for p in key)
