"""Simulator contracts: forward maps, SGD gradients, training protocol."""

import numpy as np
import pytest

from tsforget import nets, taskgen
from tsforget.nets import (
    ACTIVATIONS,
    ERF,
    LARGE_INPUT,
    LINEAR,
    MEAN_FIELD,
    RELU,
    SCALINGS,
    TrainingSchedule,
    TwoLayerNet,
    empirical_gen_error,
    feature_mse,
    forward,
    init_student,
    sgd_step,
    train,
)
from tsforget.overlaps import Task, overlaps_from_weights


def small_net(activation=ERF, scaling=LARGE_INPUT, h=3, d=12, seed=0) -> TwoLayerNet:
    rng = np.random.default_rng(seed)
    return TwoLayerNet(
        w=rng.standard_normal((h, d)),
        heads={Task.DAGGER: rng.standard_normal(h), Task.DDAGGER: rng.standard_normal(h)},
        activation=activation,
        scaling=scaling,
    )


def teacher_like(net: TwoLayerNet, task: Task, seed=1) -> TwoLayerNet:
    rng = np.random.default_rng(seed)
    return TwoLayerNet(
        w=rng.standard_normal((2, net.input_dim)),
        heads={task: rng.standard_normal(2)},
        activation=net.activation,
        scaling=net.scaling,
    )


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------


def test_forward_zero_head():
    net = small_net()
    net.heads[Task.DAGGER][:] = 0.0
    x = np.random.default_rng(2).standard_normal(net.input_dim)
    assert forward(net, x, Task.DAGGER) == 0.0


def test_forward_linear_matches_matrix_arithmetic():
    net = small_net(activation=LINEAR)
    x = np.random.default_rng(3).standard_normal(net.input_dim)
    expected = float(net.heads[Task.DAGGER] @ (net.w @ x)) / np.sqrt(net.input_dim)
    assert forward(net, x, Task.DAGGER) == pytest.approx(expected, abs=1e-12)


def test_forward_erf_at_zero_input():
    net = small_net()
    assert forward(net, np.zeros(net.input_dim), Task.DAGGER) == 0.0


def test_forward_mean_field_scaling():
    net = small_net(scaling=MEAN_FIELD)
    x = np.random.default_rng(4).standard_normal(net.input_dim)
    from scipy.special import erf

    expected = float(net.heads[Task.DAGGER] @ erf((net.w @ x) / np.sqrt(2))) / net.hidden_dim
    assert forward(net, x, Task.DAGGER) == pytest.approx(expected, abs=1e-12)


def test_forward_dimension_mismatch():
    net = small_net()
    with pytest.raises(nets.NetError):
        forward(net, np.zeros(net.input_dim + 1), Task.DAGGER)


# ---------------------------------------------------------------------------
# sgd_step
# ---------------------------------------------------------------------------


def _numeric_gradient(student, teacher, x, task, param, index, eps=1e-6):
    def loss(net):
        d = forward(net, x, task) - forward(teacher, x, task)
        return 0.5 * d * d

    plus = student.copy()
    minus = student.copy()
    if param == "w":
        plus.w[index] += eps
        minus.w[index] -= eps
    else:
        plus.heads[task][index] += eps
        minus.heads[task][index] -= eps
    return (loss(plus) - loss(minus)) / (2 * eps)


@pytest.mark.parametrize("activation", [ERF, LINEAR, RELU])
@pytest.mark.parametrize("scaling", [LARGE_INPUT, MEAN_FIELD])
def test_sgd_step_matches_finite_differences(activation, scaling):
    base = 100 * ACTIVATIONS.index(activation) + 10 * SCALINGS.index(scaling)
    rng = np.random.default_rng(base)
    for trial in range(5):
        student = small_net(activation, scaling, h=3, d=10, seed=base + trial)
        teacher = teacher_like(student, Task.DAGGER, seed=base + trial + 50)
        x = rng.standard_normal(10)
        if activation == RELU:
            # keep preactivations away from the kink
            lam = student.w @ x / (np.sqrt(10) if scaling == LARGE_INPUT else 1.0)
            if np.min(np.abs(lam)) < 1e-3:
                x = x + 0.1
        lr_w, lr_h = 0.7, 1.3
        new = sgd_step(student, teacher, x, Task.DAGGER, lr_w, lr_h)
        d = student.input_dim
        hd = student.hidden_dim
        # mean-field updates are plain gradient steps (the 1/H of the forward
        # map is part of the gradient); large-input heads carry the 1/D rate
        rate_w = lr_w
        rate_h = lr_h / d if scaling == LARGE_INPUT else lr_h
        grads_w = np.array([
            [_numeric_gradient(student, teacher, x, Task.DAGGER, "w", (i, j))
             for j in range(d)]
            for i in range(hd)
        ])
        grads_h = np.array([
            _numeric_gradient(student, teacher, x, Task.DAGGER, "h", i)
            for i in range(hd)
        ])
        steps_w = student.w - new.w
        steps_h = student.heads[Task.DAGGER] - new.heads[Task.DAGGER]
        # absolute floor covers finite-difference noise on near-zero entries
        floor_w = 1e-9 * max(float(np.max(np.abs(steps_w))), 1e-12)
        floor_h = 1e-9 * max(float(np.max(np.abs(steps_h))), 1e-12)
        assert np.allclose(steps_w, rate_w * grads_w, rtol=1e-6, atol=floor_w)
        assert np.allclose(steps_h, rate_h * grads_h, rtol=1e-6, atol=floor_h)


def test_sgd_step_no_change_at_zero_error():
    student = small_net()
    teacher = TwoLayerNet(
        w=student.w.copy(), heads={Task.DAGGER: student.heads[Task.DAGGER].copy()},
        activation=student.activation, scaling=student.scaling,
    )
    x = np.random.default_rng(5).standard_normal(student.input_dim)
    new = sgd_step(student, teacher, x, Task.DAGGER, 1.0, 1.0)
    assert np.array_equal(new.w, student.w)
    assert np.array_equal(new.heads[Task.DAGGER], student.heads[Task.DAGGER])


def test_sgd_step_inactive_head_untouched():
    student = small_net()
    teacher = teacher_like(student, Task.DAGGER)
    rng = np.random.default_rng(6)
    before = student.heads[Task.DDAGGER].copy()
    net = student
    for _ in range(200):
        net = sgd_step(net, teacher, rng.standard_normal(net.input_dim), Task.DAGGER, 1.0, 1.0)
    assert np.array_equal(net.heads[Task.DDAGGER], before)


# ---------------------------------------------------------------------------
# empirical_gen_error
# ---------------------------------------------------------------------------


def test_empirical_error_zero_for_identical_nets():
    net = small_net()
    teacher = TwoLayerNet(
        w=net.w.copy(), heads={Task.DAGGER: net.heads[Task.DAGGER].copy()},
        activation=net.activation, scaling=net.scaling,
    )
    assert empirical_gen_error(net, teacher, Task.DAGGER, 2000, seed=0) == 0.0


def test_empirical_error_zero_head_vs_unit_teacher():
    # 0.5 <g(rho)^2> with rho ~ N(0,1): g is uniform on (-1,1), so exactly 1/6
    # in expectation (value pinned by the Monte Carlo oracle).
    d = 2000
    spec = taskgen.SimilaritySpec(feature_overlap=0.5, dims=(d, 1, 1), seed=3)
    pair = taskgen.make_teachers_ode_limit(spec)
    student = TwoLayerNet(
        w=np.zeros((1, d)), heads={Task.DAGGER: np.zeros(1), Task.DDAGGER: np.zeros(1)},
        activation=ERF, scaling=LARGE_INPUT,
    )
    n = 200_000
    est = empirical_gen_error(student, pair.t_dag, Task.DAGGER, n, seed=4)
    # sd of 0.5 g^2 for g ~ U(-1,1) is 0.5*sqrt(1/5 - 1/9)
    se = 0.5 * np.sqrt(1.0 / 5.0 - 1.0 / 9.0) / np.sqrt(n)
    assert abs(est - 1.0 / 6.0) <= 3.0 * se


def test_empirical_error_deterministic_in_seed():
    net = small_net()
    teacher = teacher_like(net, Task.DAGGER)
    a = empirical_gen_error(net, teacher, Task.DAGGER, 5000, seed=7)
    b = empirical_gen_error(net, teacher, Task.DAGGER, 5000, seed=7)
    assert a == b


# ---------------------------------------------------------------------------
# feature_mse
# ---------------------------------------------------------------------------


def test_feature_mse_examples():
    rng = np.random.default_rng(8)
    w = rng.standard_normal((4, 6))
    assert feature_mse(w, w) == 0.0
    shifted = w + 1.0
    assert feature_mse(shifted, w) == pytest.approx(1.0 / np.mean(w * w), rel=1e-12)
    with pytest.raises(nets.NetError):
        feature_mse(w, w[:2])


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def quick_setup(v=1.0, d=500, k=2, activation=ERF, seed=0):
    spec = taskgen.SimilaritySpec(feature_overlap=v, dims=(d, 1, 1), seed=seed)
    pair = taskgen.make_teachers_ode_limit(spec, activation)
    student = init_student(d, k, 1e-3, seed=seed + 1, activation=activation)
    return pair, student


def test_train_determinism():
    pair, student = quick_setup()
    sched = TrainingSchedule(switch_step=300, total_steps=600, lr_w=1.0, lr_h=1.0,
                             test_set_size=2000, log_every=100, seed=5)
    t1 = train(student, pair.t_dag, pair.t_ddag, sched)
    t2 = train(student, pair.t_dag, pair.t_ddag, sched)
    assert np.array_equal(t1.steps, t2.steps)
    assert np.array_equal(t1.eps_dag, t2.eps_dag)
    assert np.array_equal(t1.eps_ddag, t2.eps_ddag)


def test_train_does_not_mutate_inputs_and_teachers_frozen():
    pair, student = quick_setup()
    w_before = student.w.copy()
    t1_w = pair.t_dag.w.copy()
    t2_w = pair.t_ddag.w.copy()
    t1_h = pair.t_dag.heads[Task.DAGGER].copy()
    sched = TrainingSchedule(switch_step=200, total_steps=400, lr_w=1.0, lr_h=1.0,
                             test_set_size=1000, log_every=100, seed=6)
    train(student, pair.t_dag, pair.t_ddag, sched)
    assert np.array_equal(student.w, w_before)
    assert np.array_equal(pair.t_dag.w, t1_w)
    assert np.array_equal(pair.t_ddag.w, t2_w)
    assert np.array_equal(pair.t_dag.heads[Task.DAGGER], t1_h)


def test_train_log_grid_includes_anchor_points():
    pair, student = quick_setup()
    sched = TrainingSchedule(switch_step=250, total_steps=500, lr_w=1.0, lr_h=1.0,
                             test_set_size=1000, log_every=100, seed=7,
                             extra_log_steps=(333,))
    trace = train(student, pair.t_dag, pair.t_ddag, sched)
    steps = set(trace.steps.tolist())
    assert {249, 250, 251, 333, 0, 500} <= steps
    assert {250 + i for i in range(21)} <= steps


def test_train_linear_matches_closed_form():
    # K = M = 1 linear student with frozen unit head: the overlap dynamics
    # collapse to dq/dtau = 1 - q, dr/dtau = 1 - r at lr_w = 1, so the error
    # 0.5 (q - 2 r + 1) decays exactly as eps0 * exp(-tau).
    d = 4000
    spec = taskgen.SimilaritySpec(feature_overlap=0.5, dims=(d, 1, 1), seed=2)
    pair = taskgen.make_teachers_ode_limit(spec, activation=LINEAR)
    student = init_student(d, 1, 1e-3, seed=7, activation=LINEAR)
    student.heads[Task.DAGGER] = np.array([1.0])
    s0 = overlaps_from_weights(student, pair.t_dag, pair.t_ddag)
    eps0 = 0.5 * float(s0.q[0, 0] - 2.0 * s0.r[0, 0] + 1.0)
    sched = TrainingSchedule(switch_step=3 * d, total_steps=3 * d + 10, lr_w=1.0, lr_h=0.0,
                             test_set_size=20_000, log_every=d // 2, seed=3)
    trace = train(student, pair.t_dag, pair.t_ddag, sched)
    taus = trace.steps / d
    mask = taus <= 3.0
    predicted = eps0 * np.exp(-taus[mask])
    assert np.max(np.abs(trace.eps_dag[mask] - predicted)) < 0.05


def test_train_switch_head_redraw_and_isolation():
    pair, student = quick_setup()
    sched = TrainingSchedule(switch_step=200, total_steps=400, lr_w=1.0, lr_h=1.0,
                             test_set_size=1000, log_every=50, seed=8,
                             record_overlaps=True)
    trace = train(student, pair.t_dag, pair.t_ddag, sched)
    by_step = dict(zip(trace.steps.tolist(), trace.overlaps))
    h_ddag_init = by_step[0].h_ddag
    # inactive task-2 head is bitwise constant through phase 1
    for step in (50, 100, 150, 200):
        assert np.array_equal(by_step[step].h_ddag, h_ddag_init)
    # redrawn at the switch: differs right after
    assert not np.array_equal(by_step[201].h_ddag, h_ddag_init)
    # task-1 head bitwise constant through phase 2
    h_dag_at_switch = by_step[200].h_dag
    for step in (201, 250, 300, 400):
        assert np.array_equal(by_step[step].h_dag, h_dag_at_switch)


def test_train_preactivation_variance_matches_overlap():
    # large-input scaling contract: empirical Var(w_k x / sqrt(D)) = q_kk
    d = 2000
    rng = np.random.default_rng(9)
    net = TwoLayerNet(
        w=rng.standard_normal((2, d)) * np.array([[0.7], [1.3]]),
        heads={Task.DAGGER: np.ones(2), Task.DDAGGER: np.ones(2)},
        activation=ERF, scaling=LARGE_INPUT,
    )
    q = net.w @ net.w.T / d
    xs = rng.standard_normal((20_000, d))
    lam = xs @ net.w.T / np.sqrt(d)
    emp = np.var(lam, axis=0)
    assert np.allclose(emp, np.diag(q), rtol=0.05)


def test_train_self_averaging_across_seeds():
    # std of the task-1 error across seeds stays within the 1/sqrt(D) scale
    d = 2000
    finals = []
    for seed in range(6):
        spec = taskgen.SimilaritySpec(feature_overlap=1.0, dims=(d, 1, 1), seed=100)
        pair = taskgen.make_teachers_ode_limit(spec)
        student = init_student(d, 2, 1e-3, seed=seed)
        sched = TrainingSchedule(switch_step=2 * d, total_steps=2 * d + 5, lr_w=1.0,
                                 lr_h=1.0, test_set_size=4000, log_every=d, seed=seed)
        trace = train(student, pair.t_dag, pair.t_ddag, sched)
        finals.append(trace.eps_dag[-1])
    assert float(np.std(finals)) <= 0.05


def test_train_two_phase_forgetting_patterns():
    # identical teachers: the first-task error rises fast right after the
    # switch, then recovers; orthogonal teachers: an initial window of no
    # forgetting before the error degrades
    d = 1000
    switch, total = 60_000, 110_000
    traces = {}
    for v in (0.0, 1.0):
        spec = taskgen.SimilaritySpec(feature_overlap=v, dims=(d, 1, 1),
                                      seed=1234)
        pair = taskgen.make_teachers_ode_limit(spec)
        student = init_student(d, 2, 0.0316, seed=77)
        sched = TrainingSchedule(switch_step=switch, total_steps=total,
                                 lr_w=1.0, lr_h=1.0, test_set_size=4000,
                                 log_every=1000, seed=99,
                                 extra_log_steps=(switch + 5_000, switch + 20_000))
        traces[v] = train(student, pair.t_dag, pair.t_ddag, sched)

    def at(trace, step):
        return float(trace.eps_dag[np.searchsorted(trace.steps, step)])

    early, late = switch + 5_000, switch + 20_000
    # early forgetting much faster for identical teachers
    rise_1 = at(traces[1.0], early) / at(traces[1.0], switch)
    rise_0 = at(traces[0.0], early) / at(traces[0.0], switch)
    assert rise_1 > 5.0 and rise_1 > 5.0 * rise_0
    assert rise_0 < 1.5  # no-forgetting window for orthogonal teachers
    # the identical-teacher error settles at a relatively low plateau instead
    # of degrading further, and ends below the orthogonal case
    assert at(traces[1.0], total) < 1.3 * at(traces[1.0], early)
    assert at(traces[1.0], total) < at(traces[0.0], total)
    # orthogonal teachers eventually degrade
    assert at(traces[0.0], late) > 3.0 * at(traces[0.0], switch)


def test_train_feature_mse_tracking():
    pair, student = quick_setup()
    sched = TrainingSchedule(switch_step=200, total_steps=400, lr_w=1.0, lr_h=1.0,
                             test_set_size=1000, log_every=100, seed=10,
                             track_feature_mse=True)
    trace = train(student, pair.t_dag, pair.t_ddag, sched)
    at = dict(zip(trace.steps.tolist(), trace.feature_mse))
    assert np.isnan(at[100])
    assert at[200] == 0.0
    assert at[400] > 0.0
