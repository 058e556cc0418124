"""Direction-aware inhomogeneous K-function for fiber patterns.

Fibers are discretized into weighted sample points carrying a location and a
tangent.  The K-function counts, for pairs of points on different fibers, how
many are close in space (``r1``) and in direction (``r2``), each pair
reweighted by the fitted first-moment density.
"""

from .density import (
    AngleHistogram,
    CylinderHistogram,
    DensityModel,
    LinearTrend,
    UniformDirections,
    estimate_beta,
    fit_density,
    fit_eta_histogram,
    moment_matrix,
)
from .errors import (
    ConfigError,
    DataFormatError,
    DegenerateCloudError,
    EmptyDataError,
    FiberKError,
    IllConditionedCovarianceError,
    InfiniteCorrectionError,
    InvalidGridError,
    InvalidInputError,
    InvalidSpecError,
    NonpositiveDensityError,
)
from .fibers import (
    CubicCurve,
    Fiber,
    Polyline,
    SamplePoint,
    SampleSet,
    SamplingConfig,
    Segment,
    discretize,
    discretize_all,
    fit_cubic_curve,
)
from .geometry import (
    ORIENTED,
    UNORIENTED,
    OrientationConvention,
    Window,
    cap_fraction,
    direction_distance,
    edge_correction,
    k0,
)
from .kstat import KEstimate, KGrid, estimate_k, estimate_k_many, estimate_k_naive, relative_k
from .simulate import (
    DependentModelSpec,
    Envelope,
    FiberPattern,
    NullModelSpec,
    envelope,
    resample_null,
    simulate_dependent,
    simulate_null,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
