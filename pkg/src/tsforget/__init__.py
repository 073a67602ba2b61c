"""Continual learning in two-layer teacher-student networks.

Numerical engine for studying catastrophic forgetting and transfer when an
online-SGD student is trained on one frozen teacher network and then switched
to a second teacher of controlled similarity.  Provides:

- closed-form Gaussian field averages plus a Monte Carlo oracle (`integrals`)
- macroscopic overlap state and the analytic test error (`overlaps`)
- order-parameter ODE integration across the task switch (`ode`)
- finite-size online SGD simulation in large-input and mean-field
  scalings (`nets`)
- teacher-pair construction at prescribed feature/readout similarity
  (`taskgen`)
- forgetting and transfer metrics over traces (`metrics`)
- a config-driven experiment runner and CLI (`runner`, `cli`)
"""

__version__ = "0.1.0"

from .integrals import i2, i3, i4, mc_expectation  # noqa: E402
from .metrics import (  # noqa: E402
    SwitchAnchoredTrace,
    cross_section,
    forgetting_at,
    initial_rate,
    long_time,
    max_forgetting,
    max_transfer,
    transfer_at,
)
from .nets import (  # noqa: E402
    ErrorTrace,
    TrainingSchedule,
    TwoLayerNet,
    empirical_gen_error,
    feature_mse,
    forward,
    init_student,
    sgd_step,
    train,
)
from .ode import OdeSchedule, OdeTrajectory, fixed_point_residual, integrate, rhs  # noqa: E402
from .overlaps import (  # noqa: E402
    OverlapState,
    Task,
    assemble_covariance,
    gen_error,
    overlaps_from_weights,
    project,
)
from .runner import ExperimentConfig, RunManifest, run  # noqa: E402
from .taskgen import (  # noqa: E402
    SimilaritySpec,
    TeacherPair,
    make_teachers,
    make_teachers_mean_field,
    make_teachers_ode_limit,
    random_orthogonal,
    unit_pair_with_overlap,
)
