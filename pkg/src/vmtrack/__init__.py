"""Online tracking of several sound-source directions with von Mises models.

The tracker alternates a von Mises random-walk prediction with a
variational EM pass over each frame of direction-of-arrival observations,
and creates or drops tracks as sources appear and fall silent.
"""

from .circular_stats import (
    VonMises,
    angle_diff,
    bessel_i,
    harmonic_sum,
    log_bessel_i,
    ratio_a,
    ratio_a_inv,
    vm_sample,
    wrap,
)
from .evaluation import MetricsReport, Trajectory, associate, compute_metrics, evaluate
from .model import (
    FilterConfig,
    Frame,
    FrameOrderError,
    MalformedInputError,
    ModelParams,
    Observation,
    Track,
)
from .simulator import GroundTruth, ScenarioSpec, crossing_scenario, generate
from .track_manager import FrameOutput, Tracker
from .vem_filter import VemState, predict, vem_iterate

__version__ = "0.1.0"
