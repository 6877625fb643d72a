"""Shared fixtures: small hand-built datasets and simulated trials."""
import numpy as np
import pytest

from enrtspill.model import EnrtData
from enrtspill.sim import ScenarioSpec, generate_dataset


def members_dataset(arms, obs_net, y, true_net=None, v=None, with_indexes=True):
    """EnrtData from member-level arrays.

    ``arms[k]`` is network k's arm; members are recorded in ``obs_net`` and
    truly belong to ``true_net`` (default: same).  ``g_star`` and ``g`` are
    derived from those networks' arms.
    """
    arms = np.asarray(arms, dtype=np.int8)
    obs_net = np.asarray(obs_net, dtype=np.int64)
    y = np.asarray(y, dtype=np.int8)
    M = obs_net.size
    true_net = obs_net if true_net is None else np.asarray(true_net, dtype=np.int64)
    v = np.zeros(M, dtype=np.int8) if v is None else np.asarray(v, dtype=np.int8)
    K = arms.size
    if with_indexes:
        network = np.concatenate([np.arange(K), obs_net])
        is_index = np.r_[np.ones(K, bool), np.zeros(M, bool)]
        g_star = np.r_[np.zeros(K, np.int8), arms[obs_net]]
        yy = np.r_[np.zeros(K, np.int8), y]
        vv = np.r_[np.zeros(K, np.int8), v]
        tn = np.r_[np.arange(K), true_net]
    else:
        network, is_index, g_star, yy, vv, tn = obs_net, np.zeros(M, bool), arms[obs_net], y, v, true_net
    return EnrtData.from_arrays(network, arms, is_index, g_star, yy, v=vv, true_network=tn)


@pytest.fixture
def make_members():
    return members_dataset


@pytest.fixture(scope="session")
def sim_dataset():
    """A moderately large simulated trial with internal validation."""
    spec = ScenarioSpec(p_m=0.75, p_y0=0.25, rr=2.0, p_r=0.5, icc=0.1, k=400, n_k=3,
                        reps=1, seed=99)
    return generate_dataset(spec, 0)
