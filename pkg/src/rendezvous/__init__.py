"""Gap-aware rendezvous detection on road networks."""

from rendezvous.config import ConfigError, Params
from rendezvous.detect import (
    DetectorReport,
    RendezvousNode,
    detect_dc_tgard,
    detect_prism,
    detect_tgard,
    npe,
    run_detector,
    score,
)
from rendezvous.gaps import GapPair, Trajectory, TrajectoryGap, extract_gaps, load_trajectories, pair_gaps
from rendezvous.geometry import GeoEllipse, Lens, Point, lens_area, lens_at
from rendezvous.network import SpatialNetwork, load_network, load_traces
from rendezvous.reach import availability, earliest_arrival, latest_departure, refresh_profile
from rendezvous.subnet import build_samples

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DetectorReport",
    "GapPair",
    "GeoEllipse",
    "Lens",
    "Params",
    "Point",
    "RendezvousNode",
    "SpatialNetwork",
    "Trajectory",
    "TrajectoryGap",
    "availability",
    "build_samples",
    "detect_dc_tgard",
    "detect_prism",
    "detect_tgard",
    "earliest_arrival",
    "extract_gaps",
    "latest_departure",
    "lens_area",
    "lens_at",
    "load_network",
    "load_traces",
    "load_trajectories",
    "npe",
    "pair_gaps",
    "refresh_profile",
    "run_detector",
    "score",
]
