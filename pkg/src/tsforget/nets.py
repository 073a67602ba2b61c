"""Finite-size two-layer networks and online SGD over a task switch.

Two forward-map scalings are supported:

- ``large_input``: preactivation W_l x / sqrt(D), output sum_l v_l g(.).
  Feature weights update with an effective rate lr_w, head weights with
  lr_h / D; these are the scalings under which the dynamics close in the
  large-D limit.
- ``mean_field``: output (1/H) sum_l v_l g(W_l x) with no preactivation
  normaliser; both layers take plain gradient steps at their stated rates.

Training is strictly online (a fresh Gaussian sample every step) and
multi-headed: the student shares feature weights across both tasks but owns
one head per task, and only the active task's head is ever updated.  At the
task switch the incoming task's head is re-drawn from N(0, sigma0^2), so
phase-1 trajectories are independent of phase-2 head randomness.

Test error is 0.5 <(student - teacher)^2> estimated on a test set that is
fixed per (seed, task) and reused at every log step, which removes
evaluation noise from the error curves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .overlaps import OverlapState, Task, overlaps_from_weights
from .seeding import rng_from

LARGE_INPUT = "large_input"
MEAN_FIELD = "mean_field"
SCALINGS = (LARGE_INPUT, MEAN_FIELD)

ERF = "erf"
LINEAR = "linear"
RELU = "relu"
ACTIVATIONS = (ERF, LINEAR, RELU)

_EVAL_CHUNK_ENTRIES = 2**24  # cap test-input chunks at ~128 MB of float64


class NetError(ValueError):
    """Dimension mismatch or invalid network configuration."""


def activation_pair(name: str):
    """(g, g') callables for an activation name; g'(0) = 0 for relu."""
    if name == ERF:
        from .integrals import g_erf, g_erf_prime

        return g_erf, g_erf_prime
    if name == LINEAR:
        return (lambda x: x), (lambda x: np.ones_like(x))
    if name == RELU:
        return (lambda x: np.maximum(x, 0.0)), (lambda x: (x > 0.0).astype(float))
    raise NetError(f"unknown activation {name!r}")


@dataclass
class TwoLayerNet:
    """Feature matrix plus one head per task it can be evaluated on.

    Teachers are built with a single head and are immutable by convention;
    the student carries both task heads.
    """

    w: np.ndarray
    heads: dict[Task, np.ndarray]
    activation: str
    scaling: str

    def __post_init__(self) -> None:
        self.w = np.asarray(self.w, dtype=float)
        if self.w.ndim != 2:
            raise NetError(f"feature matrix must be 2-D, got shape {self.w.shape}")
        if self.activation not in ACTIVATIONS:
            raise NetError(f"unknown activation {self.activation!r}")
        if self.scaling not in SCALINGS:
            raise NetError(f"unknown scaling {self.scaling!r}")
        self.heads = {t: np.asarray(h, dtype=float) for t, h in self.heads.items()}
        for t, h in self.heads.items():
            if h.shape != (self.hidden_dim,):
                raise NetError(f"head for {t} has shape {h.shape}, expected ({self.hidden_dim},)")

    @property
    def input_dim(self) -> int:
        return self.w.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w.shape[0]

    def head(self, task: Task) -> np.ndarray:
        if task not in self.heads:
            raise NetError(f"network has no head for task {task}")
        return self.heads[task]

    def copy(self) -> "TwoLayerNet":
        return TwoLayerNet(
            w=self.w.copy(),
            heads={t: h.copy() for t, h in self.heads.items()},
            activation=self.activation,
            scaling=self.scaling,
        )

    def to_json_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_dim": self.hidden_dim,
            "activation": self.activation,
            "scaling": self.scaling,
            "w": self.w.ravel().tolist(),
            "heads": {t.value: h.tolist() for t, h in self.heads.items()},
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "TwoLayerNet":
        h, di = int(d["hidden_dim"]), int(d["input_dim"])
        return cls(
            w=np.asarray(d["w"], dtype=float).reshape(h, di),
            heads={Task(k): np.asarray(v, dtype=float) for k, v in d["heads"].items()},
            activation=d["activation"],
            scaling=d["scaling"],
        )


def init_student(
    input_dim: int,
    hidden_dim: int,
    sigma0: float,
    seed: int,
    activation: str = ERF,
    scaling: str = LARGE_INPUT,
) -> TwoLayerNet:
    """Student with all weights i.i.d. N(0, sigma0^2) and both task heads."""
    rng = rng_from(seed, "student-init")
    return TwoLayerNet(
        w=sigma0 * rng.standard_normal((hidden_dim, input_dim)),
        heads={
            Task.DAGGER: sigma0 * rng.standard_normal(hidden_dim),
            Task.DDAGGER: sigma0 * rng.standard_normal(hidden_dim),
        },
        activation=activation,
        scaling=scaling,
    )


def _preactivations(net: TwoLayerNet, x: np.ndarray) -> np.ndarray:
    if net.scaling == LARGE_INPUT:
        return net.w @ x / np.sqrt(net.input_dim)
    return net.w @ x


def _output_from_fields(net: TwoLayerNet, lam_g: np.ndarray, task: Task) -> float | np.ndarray:
    out = net.head(task) @ lam_g
    if net.scaling == MEAN_FIELD:
        out = out / net.hidden_dim
    return out


def forward(net: TwoLayerNet, x: np.ndarray, task: Task) -> float:
    """Scalar network output on one input under the net's scaling rule."""
    x = np.asarray(x, dtype=float)
    if x.shape != (net.input_dim,):
        raise NetError(f"input has shape {x.shape}, expected ({net.input_dim},)")
    g, _ = activation_pair(net.activation)
    return float(_output_from_fields(net, g(_preactivations(net, x)), task))


def forward_batch(net: TwoLayerNet, xs: np.ndarray, task: Task) -> np.ndarray:
    """Vector of outputs for a batch of inputs, rows of ``xs``."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2 or xs.shape[1] != net.input_dim:
        raise NetError(f"batch has shape {xs.shape}, expected (n, {net.input_dim})")
    g, _ = activation_pair(net.activation)
    lam = xs @ net.w.T
    if net.scaling == LARGE_INPUT:
        lam /= np.sqrt(net.input_dim)
    out = g(lam) @ net.head(task)
    if net.scaling == MEAN_FIELD:
        out = out / net.hidden_dim
    return out


def _update_inplace(
    student: TwoLayerNet,
    teacher: TwoLayerNet,
    x: np.ndarray,
    task: Task,
    lr_w: float,
    lr_h: float,
    g,
    gp,
    g_t,
) -> None:
    """One online SGD step on (W, heads[task]); the other head is untouched."""
    lam = _preactivations(student, x)
    glam = g(lam)
    h = student.heads[task]
    y = float(_output_from_fields(teacher, g_t(_preactivations(teacher, x)), task))
    if student.scaling == LARGE_INPUT:
        d = student.input_dim
        delta = float(h @ glam) - y
        coef = (lr_w / np.sqrt(d)) * delta * (h * gp(lam))
        student.w -= coef[:, None] * x[None, :]
        h -= (lr_h / d) * delta * glam
    else:
        hd = student.hidden_dim
        delta = float(h @ glam) / hd - y
        coef = (lr_w / hd) * delta * (h * gp(lam))
        student.w -= coef[:, None] * x[None, :]
        h -= (lr_h / hd) * delta * glam


def sgd_step(
    student: TwoLayerNet,
    teacher: TwoLayerNet,
    x: np.ndarray,
    task: Task,
    lr_w: float,
    lr_h: float,
) -> TwoLayerNet:
    """Return the student after one online SGD step on the given sample.

    The update equals the exact gradient of the per-sample squared loss times
    the layer's scaled rate: lr_w and lr_h/D in large-input scaling, plain
    lr_w and lr_h in mean-field scaling (whose gradients carry the 1/H of the
    forward map).
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (student.input_dim,):
        raise NetError(f"sample has shape {x.shape}, expected ({student.input_dim},)")
    if teacher.input_dim != student.input_dim:
        raise NetError("student and teacher input dimensions differ")
    if not np.all(np.isfinite(x)):
        raise NetError("sample contains non-finite entries")
    out = student.copy()
    g, gp = activation_pair(out.activation)
    g_t, _ = activation_pair(teacher.activation)
    _update_inplace(out, teacher, x, task, lr_w, lr_h, g, gp, g_t)
    return out


def _test_chunks(seed: int, task: Task, n_test: int, input_dim: int):
    """Deterministic stream of test-input chunks for (seed, task)."""
    rng = rng_from(seed, "test-set", task.value)
    chunk = max(1, min(n_test, _EVAL_CHUNK_ENTRIES // max(input_dim, 1)))
    done = 0
    while done < n_test:
        m = min(chunk, n_test - done)
        yield rng.standard_normal((m, input_dim))
        done += m


def empirical_gen_error(
    student: TwoLayerNet, teacher: TwoLayerNet, task: Task, n_test: int, seed: int
) -> float:
    """0.5 * mean squared student-teacher gap over the (seed, task) test set."""
    if n_test < 1:
        raise NetError("n_test must be positive")
    total = 0.0
    for xs in _test_chunks(seed, task, n_test, student.input_dim):
        d = forward_batch(student, xs, task) - forward_batch(teacher, xs, task)
        total += float(np.sum(d * d))
    return 0.5 * total / n_test


def feature_mse(w_now: np.ndarray, w_ref: np.ndarray) -> float:
    """Mean squared entry difference, normalised by the mean squared entry
    of the reference matrix (0 at the reference, scale-free)."""
    w_now = np.asarray(w_now, dtype=float)
    w_ref = np.asarray(w_ref, dtype=float)
    if w_now.shape != w_ref.shape:
        raise NetError(f"shape mismatch {w_now.shape} vs {w_ref.shape}")
    norm = float(np.mean(w_ref * w_ref))
    if norm <= 0.0:
        raise NetError("reference matrix has zero mean squared entry")
    return float(np.mean((w_now - w_ref) ** 2)) / norm


@dataclass
class TrainingSchedule:
    """Two-phase online training plan.

    The log grid always contains 0, the switch step and its neighbours, the
    first ``n_initial_rate`` steps after the switch at unit spacing, any
    ``extra_log_steps``, and the final step, on top of the regular
    ``log_every`` cadence.
    """

    switch_step: int
    total_steps: int
    lr_w: float
    lr_h: float
    test_set_size: int = 10_000
    log_every: int = 1000
    seed: int = 0
    student_init_std: float = 1e-3
    switch_head_std: float | None = None  # None: re-draw at student_init_std
    n_initial_rate: int = 20
    extra_log_steps: tuple[int, ...] = ()
    record_overlaps: bool = False
    track_feature_mse: bool = False

    def __post_init__(self) -> None:
        if not (0 < self.switch_step < self.total_steps):
            raise NetError("need 0 < switch_step < total_steps")
        if self.log_every < 1 or self.test_set_size < 1:
            raise NetError("log_every and test_set_size must be positive")

    def log_steps(self) -> np.ndarray:
        grid = set(range(0, self.total_steps + 1, self.log_every))
        grid.update((self.switch_step - 1, self.switch_step, self.switch_step + 1))
        grid.update(
            self.switch_step + i
            for i in range(self.n_initial_rate + 1)
        )
        grid.update(int(s) for s in self.extra_log_steps)
        grid.update((0, self.total_steps))
        grid = {s for s in grid if 0 <= s <= self.total_steps}
        return np.array(sorted(grid), dtype=np.int64)


def switch_head_draw(sched: TrainingSchedule, hidden_dim: int) -> np.ndarray:
    """The task-2 head drawn at the switch; a pure function of the schedule
    seed so the ODE engine can be handed the identical vector."""
    std = (
        sched.switch_head_std
        if sched.switch_head_std is not None
        else sched.student_init_std
    )
    return std * rng_from(sched.seed, "switch-head").standard_normal(hidden_dim)


@dataclass
class ErrorTrace:
    """Time-indexed log of both task errors over a training run."""

    steps: np.ndarray
    eps_dag: np.ndarray
    eps_ddag: np.ndarray
    switch_step: int
    overlaps: list[OverlapState] | None = None
    feature_mse: np.ndarray | None = None
    final_weights: np.ndarray | None = field(default=None, repr=False)


def train(
    student: TwoLayerNet,
    teacher1: TwoLayerNet,
    teacher2: TwoLayerNet,
    sched: TrainingSchedule,
) -> ErrorTrace:
    """Two-phase online SGD: (W, head1) against teacher1 until the switch,
    then (W, head2) against teacher2, with both test errors logged.

    Deterministic for fixed (student, teachers, schedule): all randomness
    comes from streams derived from ``sched.seed``.  The task-2 head is
    re-drawn fresh (``switch_head_draw``) when the switch is reached; the
    entry logged exactly at the switch step precedes both the re-draw and the
    first phase-2 update, so metrics can anchor there.

    Samples are drawn in chunks and the frozen teacher's labels for a chunk
    are computed in one batched pass; chunk boundaries never change the
    sample stream (generator output is continuous across calls), so traces
    are reproducible bit for bit.
    """
    net = student.copy()
    d = net.input_dim
    if teacher1.input_dim != d or teacher2.input_dim != d:
        raise NetError("teacher input dimensions do not match the student")
    if sched.record_overlaps and net.scaling != LARGE_INPUT:
        raise NetError("overlap recording requires large-input scaling")

    g, gp = activation_pair(net.activation)

    x1_test = np.concatenate(
        list(_test_chunks(sched.seed, Task.DAGGER, sched.test_set_size, d))
    )
    x2_test = np.concatenate(
        list(_test_chunks(sched.seed, Task.DDAGGER, sched.test_set_size, d))
    )
    y1_test = forward_batch(teacher1, x1_test, Task.DAGGER)
    y2_test = forward_batch(teacher2, x2_test, Task.DDAGGER)

    def eval_errors() -> tuple[float, float]:
        d1 = forward_batch(net, x1_test, Task.DAGGER) - y1_test
        d2 = forward_batch(net, x2_test, Task.DDAGGER) - y2_test
        return 0.5 * float(np.mean(d1 * d1)), 0.5 * float(np.mean(d2 * d2))

    log_steps = sched.log_steps()
    n_log = len(log_steps)
    eps_dag = np.empty(n_log)
    eps_ddag = np.empty(n_log)
    fmse = np.full(n_log, np.nan) if sched.track_feature_mse else None
    overlaps: list[OverlapState] | None = [] if sched.record_overlaps else None
    w_switch: np.ndarray | None = None

    rng_samples = rng_from(sched.seed, "samples")
    sample_chunk = max(1, min(8192, _EVAL_CHUNK_ENTRIES // (8 * max(d, 1))))

    log_i = 0

    def log_at(step: int) -> None:
        nonlocal log_i, w_switch
        if step == sched.switch_step and w_switch is None:
            w_switch = net.w.copy()
        if log_i >= n_log or log_steps[log_i] != step:
            return
        e1, e2 = eval_errors()
        if not (np.isfinite(e1) and np.isfinite(e2)):
            raise FloatingPointError(f"non-finite loss at step {step}")
        eps_dag[log_i] = e1
        eps_ddag[log_i] = e2
        if overlaps is not None:
            overlaps.append(overlaps_from_weights(net, teacher1, teacher2))
        if fmse is not None and w_switch is not None:
            fmse[log_i] = feature_mse(net.w, w_switch)
        log_i += 1

    w = net.w
    mean_field = net.scaling == MEAN_FIELD
    hd = net.hidden_dim
    inv_sqrt_d = 1.0 / np.sqrt(d)

    log_at(0)
    mu = 0
    while mu < sched.total_steps:
        phase2 = mu >= sched.switch_step
        if mu == sched.switch_step:
            net.heads[Task.DDAGGER] = switch_head_draw(sched, hd)
        task = Task.DDAGGER if phase2 else Task.DAGGER
        teacher = teacher2 if phase2 else teacher1
        h = net.heads[task]
        # chunks never straddle the switch, so one batched teacher pass per chunk
        limit = sched.total_steps if phase2 else sched.switch_step
        m = min(sample_chunk, limit - mu)
        xs = rng_samples.standard_normal((m, d))
        ys = forward_batch(teacher, xs, task)
        for j in range(m):
            x = xs[j]
            if mean_field:
                lam = w @ x
                glam = g(lam)
                delta = (h @ glam) / hd - ys[j]
                w -= ((sched.lr_w / hd) * delta * (h * gp(lam)))[:, None] * x
                h -= (sched.lr_h / hd) * delta * glam
            else:
                lam = (w @ x) * inv_sqrt_d
                glam = g(lam)
                delta = h @ glam - ys[j]
                w -= ((sched.lr_w * inv_sqrt_d) * delta * (h * gp(lam)))[:, None] * x
                h -= (sched.lr_h / d) * delta * glam
            mu += 1
            log_at(mu)

    return ErrorTrace(
        steps=log_steps,
        eps_dag=eps_dag,
        eps_ddag=eps_ddag,
        switch_step=sched.switch_step,
        overlaps=overlaps,
        feature_mse=fmse,
        final_weights=net.w.copy(),
    )
