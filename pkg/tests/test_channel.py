from dataclasses import replace

import numpy as np
import pytest

from risopt.channel import (compute_coverage, dump_channels_csv, effective_channel,
                            effective_channels, generate_channel_set, load_channels_csv,
                            make_deployment, pathloss_gain, sample_small_scale, sector_index)
from risopt.config import FadingConfig, SystemConfig, with_overrides
from risopt.ris import RisState, random_state

from conftest import desk_config


def test_rician_infinite_kappa_is_deterministic(rng):
    assert np.array_equal(sample_small_scale(rng, (3, 4), "rician", np.inf), np.ones((3, 4)))


def test_rician_zero_kappa_matches_rayleigh():
    a = sample_small_scale(np.random.default_rng(5), (1000,), "rician", 0.0)
    b = sample_small_scale(np.random.default_rng(5), (1000,), "rayleigh")
    assert np.allclose(a, b)


@pytest.mark.parametrize("kind, kappa", [("rayleigh", 0.0), ("rician", 2.0), ("rician", 10.0)])
def test_unit_average_power(rng, kind, kappa):
    h = sample_small_scale(rng, (100_000,), kind, kappa)
    assert abs(np.mean(np.abs(h) ** 2) - 1) < 0.02


def test_unknown_fading_kind(rng):
    with pytest.raises(ValueError):
        sample_small_scale(rng, 3, "nakagami")


def test_pathloss_doubling_distance():
    ratio = pathloss_gain(20.0, 2.2, -30) / pathloss_gain(10.0, 2.2, -30)
    assert ratio == pytest.approx(10 ** (-2.2 * np.log10(2)), rel=1e-12)
    assert ratio == pytest.approx(0.217, abs=1e-3)
    assert pathloss_gain(1.0, 3.0, -30) == pytest.approx(1e-3)


def test_subbands_independent():
    cfg = SystemConfig(L=1, K=1, N_B=1, N_U=1, N_R=1, N_i=2, fading=FadingConfig(rician_kappa=0.0))
    draws = np.array([generate_channel_set(cfg, np.random.default_rng(s)).G_bs[0, 0, :, 0, 0]
                      for s in range(10_000)])
    c = np.corrcoef(draws[:, 0].real, draws[:, 1].real)[0, 1]
    assert abs(c) < 0.05


def test_shapes_and_same_draw_across_sectors():
    cfg = desk_config()
    ch = generate_channel_set(cfg, np.random.default_rng(3))
    assert ch.shape == dict(L=2, K=3, N=2, N_i=8, N_U=2, N_R=16, N_B=2)
    ch2 = generate_channel_set(with_overrides(cfg, N_s=2), np.random.default_rng(3))
    assert ch.checksum() == ch2.checksum()


def test_uncovered_user_has_zero_ris_link():
    cfg = desk_config(**{"geometry.layout": "half"})
    ch = generate_channel_set(cfg, np.random.default_rng(0))
    blind = ch.ris_of < 0
    assert blind.any()
    assert np.all(ch.G_user[blind] == 0)
    star = generate_channel_set(with_overrides(cfg, N_s=2), np.random.default_rng(0))
    assert np.all(star.ris_of >= 0)


def test_sector_index():
    assert list(sector_index(np.array([0.1, np.pi - 0.1]), 1)) == [0, -1]
    assert list(sector_index(np.array([0.1, np.pi - 0.1, -np.pi / 2 + 0.1]), 2)) == [0, 1, 0]
    assert list(sector_index(np.array([0.0, np.pi / 2, np.pi, -np.pi / 2]), 4)) == [0, 1, 2, 3]


def test_layout_sectors_covers_every_sector():
    cfg = desk_config(K=4, N_s=4, **{"geometry.layout": "sectors"})
    dep = make_deployment(cfg, np.random.default_rng(2))
    _, sec = compute_coverage(dep, 4)
    assert sorted(sec[0]) == [0, 1, 2, 3]


def test_zero_ris_returns_direct_link():
    cfg = desk_config()
    ch = generate_channel_set(cfg, np.random.default_rng(1))
    zero = RisState(np.zeros((cfg.N, cfg.N_R, 1), complex))
    assert np.array_equal(effective_channels(ch, zero), ch.F)


def test_scalar_cascade_phase():
    cfg = SystemConfig(L=1, K=1, N_B=1, N_U=1, N_R=1, N_i=1)
    ch = generate_channel_set(cfg, np.random.default_rng(0))
    ch = replace(ch, G_user=np.ones_like(ch.G_user), G_bs=np.ones_like(ch.G_bs),
                 F=np.zeros_like(ch.F), ris_of=np.zeros((1, 1), int), sector_of=np.zeros((1, 1), int))
    theta = 0.7
    H = effective_channel(ch, RisState(np.full((1, 1, 1), np.exp(1j * theta))), 0, 0, 0, 0)
    assert H[0, 0] == pytest.approx(np.exp(1j * theta))


def test_batched_matches_naive_triple_product(rng):
    cfg = desk_config(N_s=2, N_R=5, N_i=3, **{"geometry.layout": "disc"})
    ch = generate_channel_set(cfg, rng)
    ris = random_state(rng, cfg.N, cfg.N_R, 2)
    H = effective_channels(ch, ris)
    for l, k, j, i in np.ndindex(cfg.L, cfg.K, cfg.L, cfg.N_i):
        naive = ch.F[l, k, j, i].copy()
        n, s = ch.ris_of[l, k], ch.sector_of[l, k]
        if n >= 0:
            for m in range(cfg.N_R):
                naive += ris.phi[n, m, s] * np.outer(ch.G_user[l, k, n, i][:, m], ch.G_bs[n, j, i][m])
        assert np.allclose(H[l, k, j, i], naive, atol=1e-15, rtol=1e-12)
        assert np.allclose(effective_channel(ch, ris, l, k, j, i), naive, atol=1e-15, rtol=1e-12)


def test_channel_csv_round_trip(tmp_path):
    cfg = desk_config(N_i=2, N_R=4)
    ch = generate_channel_set(cfg, np.random.default_rng(9))
    path = tmp_path / "ch.csv"
    dump_channels_csv(ch, path)
    back = load_channels_csv(path, ch)
    for name in ("G_user", "G_bs", "F"):
        assert np.array_equal(getattr(back, name), getattr(ch, name))
