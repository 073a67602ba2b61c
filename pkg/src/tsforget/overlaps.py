"""Macroscopic overlap state and the analytic generalisation error.

A student with K hidden units trained against two frozen teachers (M and P
hidden units) is described, in the large input limit, by second moments of
the joint Gaussian local fields:

    Q = W W^T / D        student-student          (K x K)
    R = W Wt1^T / D      student-teacher1         (K x M)
    U = W Wt2^T / D      student-teacher2         (K x P)
    T = Wt1 Wt1^T / D    teacher1-teacher1        (M x M, frozen)
    S = Wt2 Wt2^T / D    teacher2-teacher2        (P x P, frozen)
    V = Wt1 Wt2^T / D    teacher1-teacher2        (M x P, frozen)

plus the student heads (one per task) and the frozen teacher heads.  The full
field covariance is the block matrix

    C = [[Q, R, U], [R^T, T, V], [U^T, V^T, S]]

in the fixed field ordering (student units, teacher1 units, teacher2 units).
All integral call sites index into this ordering; the order matters because
the three- and four-field averages assign positional roles to each field.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .integrals import i2_grid

GEN_ERROR_CLAMP = 1e-9


class Task(enum.Enum):
    """The two tasks: training against teacher 1 or teacher 2."""

    DAGGER = "dagger"
    DDAGGER = "ddagger"


class OverlapError(ValueError):
    """Inconsistent overlap-state dimensions or invalid inputs."""


@dataclass
class OverlapState:
    """Order parameters of one student / two-teacher system.

    q, r, u evolve during training; t, s, v and the teacher heads are frozen.
    h_dag / h_ddag are the student's task heads, v_dag / v_ddag the teacher
    heads.  Treated as immutable by all consumers.
    """

    q: np.ndarray
    r: np.ndarray
    u: np.ndarray
    t: np.ndarray
    s: np.ndarray
    v: np.ndarray
    h_dag: np.ndarray
    h_ddag: np.ndarray
    v_dag: np.ndarray
    v_ddag: np.ndarray

    def __post_init__(self) -> None:
        for name in ("q", "r", "u", "t", "s", "v"):
            setattr(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        for name in ("h_dag", "h_ddag", "v_dag", "v_ddag"):
            setattr(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        k, m, p = self.dims
        checks = {
            "q": (k, k), "r": (k, m), "u": (k, p),
            "t": (m, m), "s": (p, p), "v": (m, p),
        }
        for name, shape in checks.items():
            if getattr(self, name).shape != shape:
                raise OverlapError(
                    f"block {name} has shape {getattr(self, name).shape}, expected {shape}"
                )
        if self.h_ddag.shape != (k,):
            raise OverlapError("h_ddag length does not match student size")
        if self.v_dag.shape != (m,) or self.v_ddag.shape != (p,):
            raise OverlapError("teacher head lengths do not match teacher sizes")

    @property
    def dims(self) -> tuple[int, int, int]:
        """(K, M, P) = student, teacher1, teacher2 hidden sizes."""
        return self.q.shape[0], self.t.shape[0], self.s.shape[0]

    def student_indices(self) -> np.ndarray:
        return np.arange(self.dims[0])

    def teacher1_indices(self) -> np.ndarray:
        k, m, _ = self.dims
        return np.arange(k, k + m)

    def teacher2_indices(self) -> np.ndarray:
        k, m, p = self.dims
        return np.arange(k + m, k + m + p)

    def copy(self) -> "OverlapState":
        return OverlapState(
            q=self.q.copy(), r=self.r.copy(), u=self.u.copy(),
            t=self.t.copy(), s=self.s.copy(), v=self.v.copy(),
            h_dag=self.h_dag.copy(), h_ddag=self.h_ddag.copy(),
            v_dag=self.v_dag.copy(), v_ddag=self.v_ddag.copy(),
        )

    def head(self, task: Task) -> np.ndarray:
        return self.h_dag if task is Task.DAGGER else self.h_ddag

    def with_head(self, task: Task, head: np.ndarray) -> "OverlapState":
        head = np.asarray(head, dtype=float)
        if task is Task.DAGGER:
            return replace(self, h_dag=head)
        return replace(self, h_ddag=head)

    def to_json_dict(self) -> dict:
        """Flat JSON object: dims plus row-major arrays per named block."""
        k, m, p = self.dims
        out: dict = {"k": k, "m": m, "p": p}
        for name in ("q", "r", "u", "t", "s", "v", "h_dag", "h_ddag", "v_dag", "v_ddag"):
            out[name] = np.asarray(getattr(self, name)).ravel().tolist()
        return out

    @classmethod
    def from_json_dict(cls, d: dict) -> "OverlapState":
        k, m, p = int(d["k"]), int(d["m"]), int(d["p"])
        def blk(name: str, shape: tuple[int, ...]) -> np.ndarray:
            return np.asarray(d[name], dtype=float).reshape(shape)
        return cls(
            q=blk("q", (k, k)), r=blk("r", (k, m)), u=blk("u", (k, p)),
            t=blk("t", (m, m)), s=blk("s", (p, p)), v=blk("v", (m, p)),
            h_dag=blk("h_dag", (k,)), h_ddag=blk("h_ddag", (k,)),
            v_dag=blk("v_dag", (m,)), v_ddag=blk("v_ddag", (p,)),
        )


def assemble_covariance(state: OverlapState) -> np.ndarray:
    """Full (K+M+P)^2 local-field covariance in the fixed field ordering."""
    return np.block(
        [
            [state.q, state.r, state.u],
            [state.r.T, state.t, state.v],
            [state.u.T, state.v.T, state.s],
        ]
    )


def project(cov: np.ndarray, indices: list[int] | np.ndarray) -> np.ndarray:
    """Submatrix of the field covariance in the given index order.

    Repeated indices are allowed (a field paired with itself).  Order matters:
    downstream integrals assign positional roles to each field.
    """
    idx = np.asarray(indices, dtype=int)
    if idx.ndim != 1 or not (2 <= idx.size <= 4):
        raise OverlapError(f"projection needs 2..4 indices, got {idx.size}")
    n = cov.shape[0]
    if np.any(idx < 0) or np.any(idx >= n):
        raise OverlapError(f"projection index out of range for {n} fields")
    return cov[np.ix_(idx, idx)]


def _task_blocks(state: OverlapState, task: Task) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(student head, teacher head, teacher field indices) for a task."""
    if task is Task.DAGGER:
        return state.h_dag, state.v_dag, state.teacher1_indices()
    return state.h_ddag, state.v_ddag, state.teacher2_indices()


def gen_error(state: OverlapState, task: Task, activation: str = "erf") -> float:
    """Analytic test error 0.5 <(student - teacher)^2> for one task.

    erf path: 0.5 * wt^T I2(C) wt with the extended weight vector
    wt = (student head, -teacher head) over (student, task-teacher) fields.
    linear path: the same quadratic form with I2 replaced by the covariance
    itself.  No analytic form exists for relu (simulation only).
    """
    h, v, t_idx = _task_blocks(state, task)
    ext = np.concatenate([state.student_indices(), t_idx])
    wt = np.concatenate([h, -v])
    cov = assemble_covariance(state)
    if activation == "erf":
        mat = i2_grid(cov, ext, ext)
    elif activation == "linear":
        mat = cov[np.ix_(ext, ext)]
    elif activation == "relu":
        raise NotImplementedError(
            "no closed-form generalisation error for relu; use the simulator"
        )
    else:
        raise ValueError(f"unknown activation {activation!r}")
    eps = 0.5 * float(wt @ mat @ wt)
    if eps < -GEN_ERROR_CLAMP:
        raise OverlapError(f"generalisation error {eps:.3e} below round-off tolerance")
    return max(eps, 0.0)


def overlaps_from_weights(student, teacher1, teacher2) -> OverlapState:
    """Measure the overlap state of finite-size networks (large-input scaling).

    Every block is a row-wise inner product matrix scaled by 1/D; heads are
    copied verbatim.
    """
    from .nets import LARGE_INPUT  # local import to avoid a cycle

    nets = (student, teacher1, teacher2)
    d = student.input_dim
    if any(n.input_dim != d for n in nets):
        raise OverlapError("all networks must share the input dimension")
    if any(n.scaling != LARGE_INPUT for n in nets):
        raise OverlapError("overlap measurement is defined for large-input scaling")
    w, w1, w2 = student.w, teacher1.w, teacher2.w
    return OverlapState(
        q=w @ w.T / d,
        r=w @ w1.T / d,
        u=w @ w2.T / d,
        t=w1 @ w1.T / d,
        s=w2 @ w2.T / d,
        v=w1 @ w2.T / d,
        h_dag=student.heads[Task.DAGGER].copy(),
        h_ddag=student.heads[Task.DDAGGER].copy(),
        v_dag=teacher1.heads[Task.DAGGER].copy(),
        v_ddag=teacher2.heads[Task.DDAGGER].copy(),
    )
