"""Link travel-time estimation on a road corridor from sparse probe-vehicle GPS."""

from .estimator import (
    HistoricModel,
    HistoricRidge,
    IncidentEstimate,
    IncidentLasso,
    MedianBackprojector,
    ObservationSet,
    build_observations,
    median_backproject,
    predict_travel_time,
    solve_lasso,
    solve_ridge,
)
from .exceptions import (
    ConfigurationError,
    ConvergenceWarning,
    FcdttError,
    NumericalError,
    ParseError,
    UnobservedLinkError,
    ValidationError,
)
from .geo import GeoPoint, SegmentProjection, geodesic_distance, interpolate, point_to_segment_distance
from .matcher import MatchedFix, PathIntegral, build_path_integrals, match_trace
from .network import RoadNetwork, RoadSegment, build_difference_matrix, load_network
from .preprocess import GpsFix, StopDetectorConfig, Trace, detect_stops, parse_traces, split_at_stops
from .synth import GroundTruth, SynthConfig

__version__ = "0.1.0"
