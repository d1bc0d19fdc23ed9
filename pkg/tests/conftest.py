import numpy as np
import pytest

from fcdtt.geo import GeoPoint, destination
from fcdtt.network import RoadNetwork


def straight_corridor(n_links=5, link_length_m=100.0, origin=(28.55, 77.2), bearing=30.0):
    o = GeoPoint(*origin)
    return RoadNetwork.from_nodes([destination(o, bearing, k * link_length_m) for k in range(n_links + 1)])


@pytest.fixture
def corridor():
    return straight_corridor()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def synthetic_blocks(cfg):
    """Generate, clean and match a synthetic dataset in memory."""
    from fcdtt.evaluation import blocks_from_paths
    from fcdtt.pipeline import PreprocessSettings, preprocess_traces
    from fcdtt.synth import generate_day_traces, generate_truth

    net, truth = generate_truth(cfg)
    traces = [t for d in range(cfg.n_days) for t in generate_day_traces(net, truth, d, cfg)]
    day_paths, _, _ = preprocess_traces(traces, net, PreprocessSettings())
    day_index = {cfg.day_id(d): d for d in range(cfg.n_days)}
    return net, truth, blocks_from_paths(day_paths), day_index
