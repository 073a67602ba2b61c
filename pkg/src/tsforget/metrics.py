"""Forgetting and transfer functionals over switch-anchored traces.

Conventions (t counted in training steps after the switch step s~):

    forgetting F_t = eps1(s~ + t) - eps1(s~)     positive = forgot task 1
    transfer   T_t = eps2(s~) - eps2(s~ + t)     positive = gained on task 2

The trace grid must contain the switch step and every step these functionals
are evaluated at; nothing is interpolated, so metric values are bit-exact
functions of the logged series.  The series may hold raw errors or any
monotone transform of them (e.g. log10); the functional definitions are
applied verbatim either way.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Mapping

import numpy as np

from .nets import ErrorTrace
from .ode import OdeTrajectory

FORGETTING = "forgetting"
TRANSFER = "transfer"


class MetricsError(ValueError):
    """Requested time is missing from the trace grid."""


@dataclass(frozen=True)
class SwitchAnchoredTrace:
    """Step-indexed error series with a validated switch anchor."""

    steps: np.ndarray
    eps_dag: np.ndarray
    eps_ddag: np.ndarray
    switch_step: int

    def __post_init__(self) -> None:
        steps = np.asarray(self.steps, dtype=np.int64)
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "eps_dag", np.asarray(self.eps_dag, dtype=float))
        object.__setattr__(self, "eps_ddag", np.asarray(self.eps_ddag, dtype=float))
        if not (len(steps) == len(self.eps_dag) == len(self.eps_ddag)):
            raise MetricsError("steps and error series have mismatched lengths")
        if np.any(np.diff(steps) <= 0):
            raise MetricsError("steps must be strictly increasing")
        self._index(self.switch_step)  # anchor must be on the grid
        if steps[-1] <= self.switch_step:
            raise MetricsError("trace has no post-switch region")

    @classmethod
    def from_error_trace(cls, trace: ErrorTrace) -> "SwitchAnchoredTrace":
        return cls(trace.steps, trace.eps_dag, trace.eps_ddag, trace.switch_step)

    @classmethod
    def from_ode_trajectory(cls, traj: OdeTrajectory, input_dim: int) -> "SwitchAnchoredTrace":
        """Convert tau snapshots to integer steps via step = round(tau * D)."""
        steps = np.rint(np.asarray(traj.times) * input_dim).astype(np.int64)
        return cls(steps, traj.eps_dag, traj.eps_ddag,
                   int(round(traj.switch_time * input_dim)))

    def with_log10_errors(self) -> "SwitchAnchoredTrace":
        if np.any(self.eps_dag <= 0.0) or np.any(self.eps_ddag <= 0.0):
            raise MetricsError("log10 transform needs strictly positive errors")
        return replace(
            self, eps_dag=np.log10(self.eps_dag), eps_ddag=np.log10(self.eps_ddag)
        )

    def _index(self, step: int) -> int:
        i = int(np.searchsorted(self.steps, step))
        if i >= len(self.steps) or self.steps[i] != step:
            raise MetricsError(f"step {step} is not on the trace grid")
        return i

    def value_at(self, which: str, step: int) -> float:
        series = self.eps_dag if which == FORGETTING else self.eps_ddag
        return float(series[self._index(step)])


def _check_which(which: str) -> None:
    if which not in (FORGETTING, TRANSFER):
        raise MetricsError(f"which must be {FORGETTING!r} or {TRANSFER!r}")


def forgetting_at(tr: SwitchAnchoredTrace, t: int) -> float:
    """F_t; requires s~ + t on the grid."""
    s = tr.switch_step
    return tr.value_at(FORGETTING, s + t) - tr.value_at(FORGETTING, s)


def transfer_at(tr: SwitchAnchoredTrace, t: int) -> float:
    """T_t; requires s~ + t on the grid."""
    s = tr.switch_step
    return tr.value_at(TRANSFER, s) - tr.value_at(TRANSFER, s + t)


def initial_rate(tr: SwitchAnchoredTrace, which: str, n: int = 20) -> float:
    """Average per-step change over the first n post-switch steps.

    Requires unit-spaced log entries at s~, s~+1, ..., s~+n.  The average
    telescopes to F_n / n (resp. T_n / n), but the unit grid is still
    enforced so the quantity is a genuine initial rate.
    """
    _check_which(which)
    if n < 1:
        raise MetricsError("n must be >= 1")
    for i in range(n + 1):
        tr._index(tr.switch_step + i)
    if which == FORGETTING:
        return forgetting_at(tr, n) / n
    return transfer_at(tr, n) / n


def _post_switch(tr: SwitchAnchoredTrace) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    i0 = tr._index(tr.switch_step)
    return tr.steps[i0:], tr.eps_dag[i0:], tr.eps_ddag[i0:]


def max_forgetting(tr: SwitchAnchoredTrace) -> float:
    """max_t eps1(s~+t) - eps1(s~) over the logged post-switch grid."""
    _, e1, _ = _post_switch(tr)
    return float(np.max(e1) - e1[0])


def max_transfer(tr: SwitchAnchoredTrace) -> float:
    """eps2(s~) - min_t eps2(s~+t) over the logged post-switch grid."""
    _, _, e2 = _post_switch(tr)
    return float(e2[0] - np.min(e2))


def long_time(tr: SwitchAnchoredTrace, which: str, adjusted: bool = False) -> float:
    """End-of-trace forgetting/transfer.

    The adjusted variant (forgetting only) evaluates F at the first
    post-switch step where the task-2 error has reached the best task-1 error
    attained before the switch, falling back to the trace end if that level
    is never reached.  It discounts the late re-forgetting that sets in after
    the new task is learned as well as the old one ever was.
    """
    _check_which(which)
    if which == TRANSFER:
        if adjusted:
            raise MetricsError("the adjusted rule applies to forgetting only")
        return transfer_at(tr, int(tr.steps[-1] - tr.switch_step))
    if not adjusted:
        return forgetting_at(tr, int(tr.steps[-1] - tr.switch_step))
    i0 = tr._index(tr.switch_step)
    best_phase1 = float(np.min(tr.eps_dag[: i0 + 1]))
    post_steps, _, post_e2 = _post_switch(tr)
    hits = np.nonzero(post_e2 <= best_phase1)[0]
    cut = post_steps[hits[0]] if hits.size else post_steps[-1]
    return forgetting_at(tr, int(cut - tr.switch_step))


def cross_section(
    runs: Mapping[float, SwitchAnchoredTrace],
    metric: str | Callable[[SwitchAnchoredTrace], float],
    t: int | None = None,
) -> list[tuple[float, float]]:
    """(similarity, metric value) pairs ordered by similarity.

    ``metric`` is "forgetting"/"transfer" evaluated at offset ``t``, or any
    callable of a trace.  Raises if some trace is missing the requested time.
    """
    if callable(metric):
        fn = metric
    else:
        _check_which(metric)
        if t is None:
            raise MetricsError("an offset t is required for forgetting/transfer sections")
        fn = (lambda tr: forgetting_at(tr, t)) if metric == FORGETTING else (
            lambda tr: transfer_at(tr, t)
        )
    return [(float(v), float(fn(runs[v]))) for v in sorted(runs)]
