import numpy as np
import pytest

from risopt.channel import generate_channel_set
from risopt.config import SystemConfig, with_overrides
from risopt.impairment import channel_map
from risopt.ris import random_state


def desk_config(**overrides) -> SystemConfig:
    base = SystemConfig(L=2, K=3, N_B=2, N_U=2, N_R=16, N_i=8)
    return with_overrides(base, **overrides) if overrides else base


def random_instance(rng, L=None, K=None, N_R=None, N_i=None, iqi=False, **overrides):
    """Random desk-scale config, channel draw, channel map and feasible RIS state."""
    L = L or int(rng.integers(1, 3))
    K = K or int(rng.integers(1, 4))
    N_R = N_R or int(rng.integers(2, 17))
    N_i = N_i or int(rng.integers(1, 9))
    kw = dict(L=L, K=K, N_R=N_R, N_i=N_i, sigma2=1e-10)
    if iqi:
        kw.update({"iqi.a_t": float(rng.uniform(0.7, 1.0)), "iqi.psi_t": float(rng.uniform(-0.3, 0.3)),
                   "iqi.a_r": float(rng.uniform(0.7, 1.0)), "iqi.phi_r": float(rng.uniform(-0.3, 0.3))})
    kw.update(overrides)
    cfg = with_overrides(SystemConfig(L=1, K=1, N_B=2, N_U=2, N_R=2, N_i=1), **kw)
    ch = generate_channel_set(cfg, rng)
    cmap = channel_map(ch, cfg.iqi, cfg.sigma2)
    ris = random_state(rng, cfg.N, cfg.N_R, cfg.N_s, cfg.feasibility_set, cfg.op_mode)
    return cfg, ch, cmap, ris


def random_covariances(rng, L, K, N_i, N_B, budget):
    """Random PSD covariances spending a random share of each budget."""
    A = rng.standard_normal((L, K, N_i, 2 * N_B, 2 * N_B))
    P = A @ np.swapaxes(A, -1, -2)
    tot = np.trace(P, axis1=-2, axis2=-1).reshape(L, -1).sum(axis=1)
    share = rng.uniform(0.2, 1.0, size=L)
    return P * (share * np.asarray(budget) / tot)[:, None, None, None, None]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
