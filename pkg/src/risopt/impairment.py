"""I/Q imbalance as widely linear transforms and their real-valued form.

A widely linear transform ``y = C1 x + C2 conj(x)`` acts on the stacked real
vector ``[Re x; Im x]`` as a real matrix; composing transforms corresponds to
multiplying those matrices. Everything downstream of this module works in that
real domain, where improper signals are just unconstrained covariances.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ComplexChannelSet, effective_channels
from .config import IqiConfig


@dataclass(frozen=True)
class WltPair:
    C1: np.ndarray   # coefficient of x
    C2: np.ndarray   # coefficient of conj(x)


@dataclass(frozen=True)
class RealChannelSet:
    H: np.ndarray        # (L, K, L, N_i, 2 N_U, 2 N_B)
    C_noise: np.ndarray  # (L, K, N_i, 2 N_U, 2 N_U)


def iqi_coefficients(a: float, phase: float, dim: int) -> WltPair:
    """Mismatch coefficients ``G1 = (1 + a e^{j phase}) / 2``, ``G2 = 1 - conj(G1)``."""
    g1 = (1 + a * np.exp(1j * phase)) / 2
    eye = np.eye(dim)
    return WltPair(g1 * eye, (1 - np.conj(g1)) * eye)


def compose_wlt(H: np.ndarray, tx: WltPair, rx: WltPair) -> WltPair:
    """Transmit WLT, then channel ``H``, then receive WLT, as one WLT."""
    if H.shape[-1] != tx.C1.shape[-2] or H.shape[-2] != rx.C1.shape[-1]:
        raise ValueError(f"dimension mismatch: H {H.shape}, tx {tx.C1.shape}, rx {rx.C1.shape}")
    Hc = np.conj(H)
    C1 = rx.C1 @ H @ tx.C1 + rx.C2 @ Hc @ np.conj(tx.C2)
    C2 = rx.C1 @ H @ tx.C2 + rx.C2 @ Hc @ np.conj(tx.C1)
    return WltPair(C1, C2)


def real_decompose_wlt(pair: WltPair) -> np.ndarray:
    """Real matrix mapping ``[Re x; Im x]`` to ``[Re y; Im y]`` (batched over leading axes)."""
    a, b = pair.C1, pair.C2
    top = np.concatenate([a.real + b.real, -a.imag + b.imag], axis=-1)
    bot = np.concatenate([a.imag + b.imag, a.real - b.real], axis=-1)
    return np.concatenate([top, bot], axis=-2)


def real_decompose(H: np.ndarray) -> np.ndarray:
    """Real form of a strictly linear map ``y = H x``."""
    return real_decompose_wlt(WltPair(H, np.zeros_like(H)))


def effective_noise_covariance(rx: WltPair, sigma2: float) -> np.ndarray:
    """Covariance of the real-decomposed receiver output noise.

    Proper noise of variance ``sigma2`` puts ``sigma2 / 2`` on each real
    dimension before the receive transform.
    """
    M = real_decompose_wlt(rx)
    return 0.5 * sigma2 * M @ np.swapaxes(M, -1, -2)


def iqi_real_matrices(iqi: IqiConfig, N_i: int, N_B: int, N_U: int):
    """Real transmit (2N_B x 2N_B) and receive (2N_U x 2N_U) transforms per subband."""
    tx = np.stack([real_decompose_wlt(iqi_coefficients(*iqi.tx(i), N_B)) for i in range(N_i)])
    rx_pairs = [iqi_coefficients(*iqi.rx(i), N_U) for i in range(N_i)]
    rx = np.stack([real_decompose_wlt(p) for p in rx_pairs])
    return tx, rx, rx_pairs


def build_real_channels(channels: ComplexChannelSet, ris, iqi: IqiConfig,
                        sigma2: float) -> RealChannelSet:
    """Real effective channels and noise covariances for the current RIS state."""
    H = effective_channels(channels, ris)
    L, K, _, N_i, N_U, N_B = H.shape
    tx, rx, rx_pairs = iqi_real_matrices(iqi, N_i, N_B, N_U)
    # decompose(compose(H, tx, rx)) == rx_real @ decompose(H) @ tx_real
    H_real = np.einsum("iab,lkjibc,icd->lkjiad", rx, real_decompose(H), tx, optimize=True)
    C = np.stack([effective_noise_covariance(p, sigma2) for p in rx_pairs])
    C_noise = np.broadcast_to(C, (L, K) + C.shape).copy()
    return RealChannelSet(H=H_real, C_noise=C_noise)


@dataclass(frozen=True)
class ChannelMap:
    """Real effective channels as an affine function of the RIS coefficients.

    ``H(phi) = offset + sum_m Re(phi_m) basis[..., m, 0, :, :] + Im(phi_m) basis[..., m, 1, :, :]``
    where ``phi_m`` is element ``m`` of the RIS/sector covering the user.
    """

    offset: np.ndarray   # (L, K, L, N_i, 2U, 2B)
    basis: np.ndarray    # (L, K, L, N_i, Nr, 2, 2U, 2B)
    ris_of: np.ndarray
    sector_of: np.ndarray
    C_noise: np.ndarray

    def user_coefficients(self, phi: np.ndarray) -> np.ndarray:
        """Coefficients ``(L, K, Nr)`` each user's channel depends on."""
        sec = np.clip(self.sector_of, 0, None)
        n = np.clip(self.ris_of, 0, None)
        out = phi[n, :, sec] if phi.size else np.zeros(self.ris_of.shape + (self.basis.shape[4],), complex)
        return np.where((self.ris_of >= 0)[..., None], out, 0)

    def channels(self, phi: np.ndarray) -> np.ndarray:
        c = self.user_coefficients(phi)
        L, K, J, N_i, Nr, _, a, b = self.basis.shape
        coef = np.stack([c.real, c.imag], axis=-1).reshape(L, K, 1, 1, 2 * Nr)
        flat = self.basis.reshape(L, K, J * N_i, 2 * Nr, a * b)
        return self.offset + (coef @ flat).reshape(L, K, J, N_i, a, b)

    def real_channels(self, phi: np.ndarray) -> RealChannelSet:
        return RealChannelSet(H=self.channels(phi), C_noise=self.C_noise)

    def scatter_gradient(self, user_grad: np.ndarray, shape) -> np.ndarray:
        """Accumulate per-user gradients ``(L, K, Nr)`` into a ``phi``-shaped array."""
        out = np.zeros(shape, dtype=complex)
        L, K = self.ris_of.shape
        for l in range(L):
            for k in range(K):
                n = self.ris_of[l, k]
                if n >= 0:
                    out[n, :, self.sector_of[l, k]] += user_grad[l, k]
        return out

    def channel_gradient(self, G_H: np.ndarray) -> np.ndarray:
        """Per-user gradient ``d/dRe + j d/dIm`` from a gradient w.r.t. the real channels."""
        L, K, J, N_i, Nr, _, a, b = self.basis.shape
        flat = self.basis.reshape(L, K, J * N_i, 2 * Nr, a * b)
        g = (flat @ G_H.reshape(L, K, J * N_i, a * b, 1)).sum(axis=2).reshape(L, K, Nr, 2)
        return g[..., 0] + 1j * g[..., 1]


def channel_map(channels: ComplexChannelSet, iqi: IqiConfig, sigma2: float) -> ChannelMap:
    """Linearize the real effective channels in the RIS coefficients (exact: they are affine)."""
    L, K, N, N_i, N_U, N_R = channels.G_user.shape
    N_B = channels.F.shape[-1]
    tx, rx, rx_pairs = iqi_real_matrices(iqi, N_i, N_B, N_U)
    offset = np.einsum("iab,lkjibc,icd->lkjiad", rx, real_decompose(channels.F), tx, optimize=True)

    # outer products g_u[:, m] g_b[m, :] through each user's covering RIS
    n = np.clip(channels.ris_of, 0, None)
    if N > 0:
        Gu = channels.G_user[np.arange(L)[:, None], np.arange(K)[None, :], n]    # (L, K, N_i, U, Nr)
        Gu = np.where((channels.ris_of >= 0)[..., None, None, None], Gu, 0)
        Gb = channels.G_bs[n]                                                    # (L, K, L, N_i, Nr, B)
    else:
        Gu = np.zeros((L, K, N_i, N_U, N_R), dtype=complex)
        Gb = np.zeros((L, K, L, N_i, N_R, N_B), dtype=complex)
    E = np.einsum("lkium,lkjimb->lkjimub", Gu, Gb, optimize=True)
    B = np.stack([real_decompose(E), real_decompose(1j * E)], axis=-3)            # (..., Nr, 2, 2U, 2B)
    basis = np.einsum("iab,lkjimtbc,icd->lkjimtad", rx, B, tx, optimize=True)
    C = np.stack([effective_noise_covariance(p, sigma2) for p in rx_pairs])
    C_noise = np.broadcast_to(C, (L, K) + C.shape).copy()
    return ChannelMap(offset=offset, basis=np.ascontiguousarray(basis), ris_of=channels.ris_of.copy(),
                      sector_of=channels.sector_of.copy(), C_noise=C_noise)
