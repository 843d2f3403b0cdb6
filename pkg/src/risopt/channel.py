"""Frequency-domain channel generation and the RIS-dependent effective channel.

Array layout used throughout the package (``Nr`` = elements per RIS)::

    G_user  (L, K, N, N_i, N_U, Nr)   RIS n -> user (l, k)
    G_bs    (N, L, N_i, Nr, N_B)      BS j -> RIS n
    F       (L, K, L, N_i, N_U, N_B)  BS j -> user (l, k), direct
"""
from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import SystemConfig


@dataclass(frozen=True)
class Deployment:
    bs: np.ndarray          # (L, 2)
    ris: np.ndarray         # (N, 2)
    normal: np.ndarray      # (N,) angle of each RIS's reflection-side normal
    users: np.ndarray       # (L, K, 2)


@dataclass(frozen=True)
class ComplexChannelSet:
    G_user: np.ndarray
    G_bs: np.ndarray
    F: np.ndarray
    ris_of: np.ndarray      # (L, K) covering RIS, -1 if uncovered
    sector_of: np.ndarray   # (L, K) covering sector, -1 if uncovered
    N_s: int
    deployment: Deployment | None = None

    @property
    def shape(self) -> dict:
        L, K, N, N_i, N_U, N_R = self.G_user.shape
        return dict(L=L, K=K, N=N, N_i=N_i, N_U=N_U, N_R=N_R, N_B=self.F.shape[-1])

    def coverage(self, l: int, k: int) -> tuple[int, int] | None:
        n = int(self.ris_of[l, k])
        return None if n < 0 else (n, int(self.sector_of[l, k]))

    def without_ris(self) -> "ComplexChannelSet":
        """Same draw with every RIS link removed (the No-RIS baseline)."""
        return replace(self, G_user=np.zeros_like(self.G_user),
                       ris_of=np.full_like(self.ris_of, -1),
                       sector_of=np.full_like(self.sector_of, -1))

    def checksum(self, links=("G_bs", "F")) -> str:
        h = hashlib.sha256()
        for name in links:
            h.update(np.ascontiguousarray(getattr(self, name)).tobytes())
        return h.hexdigest()


def sample_small_scale(rng: np.random.Generator, shape, kind: str = "rayleigh",
                       kappa: float = 0.0) -> np.ndarray:
    """Unit-power small-scale fading of the given shape.

    Rician fading adds an all-ones line-of-sight part with power share
    ``kappa / (1 + kappa)``; ``kappa = inf`` returns the deterministic part.
    """
    shape = tuple(np.atleast_1d(shape))
    if kind == "rayleigh":
        kappa = 0.0
    elif kind != "rician":
        raise ValueError(f"unknown fading kind {kind!r}")
    if np.isinf(kappa):
        return np.ones(shape, dtype=complex)
    nlos = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    return np.sqrt(kappa / (1 + kappa)) + np.sqrt(1 / (1 + kappa)) * nlos


def pathloss_gain(d, exponent: float, ref_db: float) -> np.ndarray:
    """Linear power gain ``10^((ref_db - 10 a log10 d) / 10)``, ``d`` in metres."""
    d = np.asarray(d, dtype=float)
    return 10.0 ** ((ref_db - 10 * exponent * np.log10(d)) / 10)


def _wrap(a):
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


def make_deployment(config: SystemConfig, rng: np.random.Generator) -> Deployment:
    geo = config.geometry
    L, K, N = config.L, config.K, config.N
    if geo.bs_positions is not None:
        bs = np.asarray(geo.bs_positions, dtype=float)
    else:
        bs = np.stack([np.arange(L) * geo.cell_spacing, np.zeros(L)], axis=1)

    # RIS n sits in cell n mod L; extra RISs in a cell are rotated by 90 deg
    cells = np.arange(max(N, 1)) % L
    offs = (np.arange(max(N, 1)) // L) * (np.pi / 2)
    auto_ris = bs[cells] + geo.bs_ris_distance * np.stack([np.cos(offs), np.sin(offs)], 1)
    ris = np.asarray(geo.ris_positions, dtype=float) if geo.ris_positions is not None else auto_ris[:N]
    if geo.ris_orientation is not None:
        normal = np.asarray(geo.ris_orientation, dtype=float)
    else:
        to_bs = bs[cells[:N]] - ris
        normal = np.arctan2(to_bs[:, 1], to_bs[:, 0])

    if geo.user_positions is not None:
        users = np.asarray(geo.user_positions, dtype=float)
    else:
        if N > 0:
            anchor, base_normal = ris[np.arange(L) % N], normal[np.arange(L) % N]
        else:
            anchor = bs + np.array([geo.bs_ris_distance, 0.0])
            base_normal = np.full(L, np.pi)
        users = np.empty((L, K, 2))
        for l in range(L):
            center, nrm = anchor[l], base_normal[l]
            for k in range(K):
                theta = _user_angle(geo.layout, geo.layout_sectors, k, rng)
                r = np.sqrt(rng.uniform(geo.user_min_radius ** 2, geo.user_radius ** 2))
                users[l, k] = center + r * np.array([np.cos(nrm + theta), np.sin(nrm + theta)])
    return Deployment(bs=bs, ris=ris.reshape(N, 2), normal=normal.reshape(N), users=users)


def _user_angle(layout: str, n_sectors: int, k: int, rng) -> float:
    """Angle of user ``k`` relative to the RIS reflection normal."""
    if layout == "reflect":
        return rng.uniform(-np.pi / 2, np.pi / 2)
    if layout == "half":
        return rng.uniform(-np.pi / 2, np.pi / 2) + (np.pi if k % 2 else 0.0)
    if layout == "sectors":
        w = 2 * np.pi / n_sectors
        return (k % n_sectors) * w + rng.uniform(-w / 2, w / 2)
    return rng.uniform(0, 2 * np.pi)


def sector_index(rel_angle, N_s: int) -> np.ndarray:
    """Sector containing a direction at ``rel_angle`` from the normal, -1 if none.

    Sector ``s`` of an ``N_s``-sector surface is centred at ``s * 2 pi / N_s``.
    A regular surface (``N_s = 1``) only serves its reflection half-space.
    """
    rel = _wrap(rel_angle)
    if N_s == 1:
        return np.where(np.abs(rel) < np.pi / 2, 0, -1)
    w = 2 * np.pi / N_s
    return np.floor(((rel + w / 2) % (2 * np.pi)) / w).astype(int) % N_s


def compute_coverage(dep: Deployment, N_s: int) -> tuple[np.ndarray, np.ndarray]:
    L, K, _ = dep.users.shape
    N = dep.ris.shape[0]
    ris_of = np.full((L, K), -1)
    sector_of = np.full((L, K), -1)
    if N == 0:
        return ris_of, sector_of
    d = np.linalg.norm(dep.users[:, :, None, :] - dep.ris[None, None], axis=-1)
    nearest = d.argmin(axis=-1)
    vec = dep.users - dep.ris[nearest]
    rel = np.arctan2(vec[..., 1], vec[..., 0]) - dep.normal[nearest]
    sec = sector_index(rel, N_s)
    ris_of[:] = np.where(sec >= 0, nearest, -1)
    sector_of[:] = sec
    return ris_of, sector_of


def generate_channel_set(config: SystemConfig, rng: np.random.Generator) -> ComplexChannelSet:
    """Draw one channel realization, independent across subbands.

    Random numbers are consumed in a fixed order that depends only on the link
    dimensions, so configs differing in ``N_s``, feasibility set or mode share
    the same draw for a given generator seed.
    """
    L, K, N, N_i = config.L, config.K, config.N, config.N_i
    N_B, N_U, N_R = config.N_B, config.N_U, config.N_R
    geo, kappa = config.geometry, config.fading.rician_kappa
    rng_geo, rng_fad = rng.spawn(2)

    dep = make_deployment(config, rng_geo)
    ris_of, sector_of = compute_coverage(dep, config.N_s)

    G_bs = sample_small_scale(rng_fad, (N, L, N_i, N_R, N_B), "rician", kappa)
    G_user = sample_small_scale(rng_fad, (L, K, N, N_i, N_U, N_R), "rician", kappa)
    F = sample_small_scale(rng_fad, (L, K, L, N_i, N_U, N_B), "rayleigh")

    d_bs_ris = np.linalg.norm(dep.ris[:, None] - dep.bs[None], axis=-1)            # (N, L)
    d_user_ris = np.linalg.norm(dep.users[:, :, None] - dep.ris[None, None], axis=-1)
    d_user_bs = np.linalg.norm(dep.users[:, :, None] - dep.bs[None, None], axis=-1)
    a_los, a_nlos, ref = geo.pathloss_exponent_los, geo.pathloss_exponent_nlos, geo.pathloss_ref_db
    G_bs *= np.sqrt(pathloss_gain(d_bs_ris, a_los, ref))[:, :, None, None, None]
    G_user *= np.sqrt(pathloss_gain(d_user_ris, a_los, ref))[:, :, :, None, None, None]
    F *= np.sqrt(pathloss_gain(d_user_bs, a_nlos, ref))[:, :, :, None, None, None]

    covered = ris_of[:, :, None] == np.arange(N)[None, None, :]
    G_user *= covered[:, :, :, None, None, None]
    if config.N_s >= 3:
        gain = geo.sector_gain if geo.sector_gain is not None else np.sqrt(config.N_s)
        G_user *= gain
    return ComplexChannelSet(G_user=G_user, G_bs=G_bs, F=F, ris_of=ris_of,
                             sector_of=sector_of, N_s=config.N_s, deployment=dep)


def _selected_phi(channels: ComplexChannelSet, phi: np.ndarray) -> np.ndarray:
    """Per-user coefficients ``(L, K, N, Nr)`` of the sector each user sits in."""
    sec = np.clip(channels.sector_of, 0, None)
    # phi: (N, Nr, N_s) -> (L, K, N, Nr)
    out = np.moveaxis(phi, -1, 0)[sec]
    return np.where((channels.ris_of >= 0)[:, :, None, None], out, 0)


def effective_channels(channels: ComplexChannelSet, ris) -> np.ndarray:
    """All effective channels ``F + sum_n G_user Phi G_bs``, shape (L, K, L, N_i, N_U, N_B)."""
    phi = _selected_phi(channels, ris.phi)
    cascade = np.einsum("lknium,lknm,njimb->lkjiub", channels.G_user, phi, channels.G_bs,
                        optimize=True)
    return channels.F + cascade


def effective_channel(channels: ComplexChannelSet, ris, l: int, k: int, j: int, i: int) -> np.ndarray:
    """Effective channel from BS ``j`` to user ``(l, k)`` on subband ``i``."""
    H = channels.F[l, k, j, i].copy()
    cov = channels.coverage(l, k)
    if cov is None:
        return H
    _, s = cov
    for n in range(channels.G_user.shape[2]):
        H += channels.G_user[l, k, n, i] @ np.diag(ris.phi[n, :, s]) @ channels.G_bs[n, j, i]
    return H


def dump_channels_csv(channels: ComplexChannelSet, path) -> None:
    """Write every complex entry as ``link,l,k,n,j,i,row,col,re,im`` (unused indices -1)."""
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["link", "l", "k", "n", "j", "i", "row", "col", "re", "im"])
        for idx in np.ndindex(channels.G_user.shape[:4]):
            l, k, n, i = idx
            _rows(w, "G_user", (l, k, n, -1, i), channels.G_user[idx])
        for idx in np.ndindex(channels.G_bs.shape[:3]):
            n, j, i = idx
            _rows(w, "G_bs", (-1, -1, n, j, i), channels.G_bs[idx])
        for idx in np.ndindex(channels.F.shape[:4]):
            l, k, j, i = idx
            _rows(w, "F", (l, k, -1, j, i), channels.F[idx])


def _rows(writer, link, key, mat):
    for (r, c), v in np.ndenumerate(mat):
        writer.writerow([link, *key, r, c, repr(float(v.real)), repr(float(v.imag))])


def load_channels_csv(path, template: ComplexChannelSet) -> ComplexChannelSet:
    """Read a dump written by :func:`dump_channels_csv` into arrays shaped like ``template``."""
    arrays = {name: np.zeros_like(getattr(template, name)) for name in ("G_user", "G_bs", "F")}
    with open(Path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            l, k, n, j, i, r, c = (int(row[x]) for x in ("l", "k", "n", "j", "i", "row", "col"))
            v = float(row["re"]) + 1j * float(row["im"])
            if row["link"] == "G_user":
                arrays["G_user"][l, k, n, i, r, c] = v
            elif row["link"] == "G_bs":
                arrays["G_bs"][n, j, i, r, c] = v
            else:
                arrays["F"][l, k, j, i, r, c] = v
    return replace(template, **arrays)
