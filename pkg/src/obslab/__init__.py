"""Sampled-data observers with a generalized inter-sample output predictor.

Build observers from continuous-time designs, compute certified maximum
allowable sampling periods, and check the certified estimates on simulated
trajectories.
"""
from .bounds import (
    IOSCertificate,
    LinearCertificate,
    Theorem1Result,
    Theorem2Constants,
    certify_linear,
    exp_integral,
    linear_certificate,
    optimize_q,
    oscillator_certificate,
    theorem1_gain,
    theorem2_constants,
    tmax_curve,
    tmax_from_constants,
    tmax_linear,
)
from .dynamics import (
    ZOH,
    ConstantInput,
    ConstantMinusQ,
    CustomGain,
    InterSamplePredictor,
    ObserverSpec,
    PlantModel,
    SinusoidInput,
    TabulatedInput,
    ZeroInput,
    ZOHExpGain,
    builtin_linear,
    builtin_oscillator,
    observer_rhs,
    predictor_rhs,
)
from .errors import ConfigurationError, MASPError, SimulationDiverged
from .linalg import small_symmetric_eig
from .simulation import (
    SamplingSchedule,
    SimConfig,
    TabulatedNoise,
    Trajectory,
    UniformNoise,
    ZeroNoise,
    make_schedule,
    rk4_step,
    simulate,
)
from .verification import check_error_bound, compare_presets, fit_decay, masp_stress

__version__ = "0.1.0"
