"""Rates, energy efficiencies and the utilities built from them.

All quantities live in the real domain: covariances ``P[l, k, i]`` are
``2 N_B x 2 N_B`` and a user's rate on one subband is
``0.5 * log2 det(I + D^-1 S)`` in bits/s/Hz.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import PowerModel
from .impairment import RealChannelSet

LN2 = np.log(2.0)
UTILITIES = ("minrate", "sumrate", "minee", "gee")


class RateError(ArithmeticError):
    """A noise-plus-interference covariance could not be factorized."""


@dataclass(frozen=True)
class UtilitySpec:
    kind: str
    weights: np.ndarray | None = None   # (L, K), MinEE only

    def __post_init__(self):
        if self.kind not in UTILITIES:
            raise ValueError(f"unknown utility {self.kind!r}; expected one of {UTILITIES}")

    @property
    def is_ee(self) -> bool:
        return self.kind in ("minee", "gee")

    @property
    def is_min(self) -> bool:
        return self.kind in ("minrate", "minee")

    def user_weights(self, shape) -> np.ndarray:
        if self.weights is None:
            return np.ones(shape)
        return np.broadcast_to(np.asarray(self.weights, dtype=float), shape)


@dataclass(frozen=True)
class RateBreakdown:
    r: np.ndarray         # (L, K, N_i)
    S: np.ndarray         # (L, K, N_i, 2U, 2U)
    D: np.ndarray         # (L, K, N_i, 2U, 2U)

    @property
    def r_total(self) -> np.ndarray:
        return self.r.sum(axis=-1)


def signal_covariance(H: np.ndarray, P: np.ndarray) -> np.ndarray:
    return H @ P @ np.swapaxes(H, -1, -2)


def own_channels(H: np.ndarray) -> np.ndarray:
    """``H[l, k, l, i]``: each user's channel from its serving BS, (L, K, N_i, ., .)."""
    L = H.shape[0]
    return H[np.arange(L), :, np.arange(L)]


def covariance_terms(real: RealChannelSet, P: np.ndarray):
    """Per-BS received covariances ``Y[l, k, j, i]`` and own-cell per-stream ``Z[l, k, m, i]``."""
    H = real.H
    Y = H @ P.sum(axis=1) @ np.swapaxes(H, -1, -2)
    Ho = own_channels(H)[:, :, None]
    Z = Ho @ P[:, None] @ np.swapaxes(Ho, -1, -2)
    return Y, Z


def rate_breakdown(real: RealChannelSet, P: np.ndarray) -> RateBreakdown:
    """Signal and noise-plus-interference covariances and rates of every user."""
    Y, Z = covariance_terms(real, P)
    L, K = Y.shape[:2]
    other_bs = ~np.eye(L, dtype=bool)[:, None, :, None, None, None]
    other_user = ~np.eye(K, dtype=bool)[None, :, :, None, None, None]
    D = (real.C_noise + np.sum(np.where(other_bs, Y, 0), axis=2)
         + np.sum(np.where(other_user, Z, 0), axis=2))
    S = np.einsum("lkkiab->lkiab", Z)
    r = 0.5 * (logdet(D + S, "D+S") - logdet(D, "D")) / LN2
    return RateBreakdown(r=r, S=S, D=D)


def logdet(A: np.ndarray, what: str = "matrix") -> np.ndarray:
    """``log det`` of a stack of symmetric positive definite matrices via Cholesky."""
    try:
        c = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        bad = _first_failure(A)
        raise RateError(f"{what} not positive definite at (l, k, i) = {bad}") from None
    return 2 * np.sum(np.log(np.diagonal(c, axis1=-2, axis2=-1)), axis=-1)


def _first_failure(A):
    for idx in np.ndindex(A.shape[:-2]):
        try:
            np.linalg.cholesky(A[idx])
        except np.linalg.LinAlgError:
            return idx
    return None


def interference_covariance(real: RealChannelSet, P: np.ndarray, l: int, k: int, i: int) -> np.ndarray:
    """Noise plus inter-cell and intra-cell interference seen by user ``(l, k)`` on subband ``i``."""
    L, K = P.shape[:2]
    H = real.H
    D = real.C_noise[l, k, i].copy()
    for n in range(L):
        if n != l:
            D += signal_covariance(H[l, k, n, i], P[n, :, i].sum(axis=0))
    for m in range(K):
        if m != k:
            D += signal_covariance(H[l, k, l, i], P[l, m, i])
    return D


def user_rate(real: RealChannelSet, P: np.ndarray, l: int, k: int) -> tuple[float, list[float]]:
    """Total and per-subband rate of user ``(l, k)``."""
    per = []
    for i in range(P.shape[2]):
        D = interference_covariance(real, P, l, k, i)
        S = signal_covariance(real.H[l, k, l, i], P[l, k, i])
        try:
            r = 0.5 * (logdet(D + S) - logdet(D)) / LN2
        except RateError:
            raise RateError(f"noise-plus-interference covariance singular at (l, k, i) = {(l, k, i)}") from None
        per.append(float(r))
    return float(sum(per)), per


def user_power(P: np.ndarray) -> np.ndarray:
    """Transmit power spent on each user, ``sum_i tr P[l, k, i]``."""
    return np.trace(P, axis1=-2, axis2=-1).sum(axis=-1)


def user_ee(rates: RateBreakdown | np.ndarray, P: np.ndarray, pm: PowerModel,
            l: int | None = None, k: int | None = None):
    """Per-user energy efficiency ``r / (p_c + eta * power)``; all users if ``l, k`` omitted."""
    r = rates.r_total if isinstance(rates, RateBreakdown) else np.asarray(rates)
    ee = r / (pm.p_c + pm.eta * user_power(P))
    return ee if l is None else float(ee[l, k])


def global_ee(rates: RateBreakdown | np.ndarray, P: np.ndarray, pm: PowerModel) -> float:
    r = rates.r_total if isinstance(rates, RateBreakdown) else np.asarray(rates)
    L, K = r.shape
    return float(r.sum() / (L * K * pm.p_c + pm.eta * user_power(P).sum()))


def utility_eval(spec: UtilitySpec, rates: np.ndarray, ees: np.ndarray | None = None,
                 gee: float | None = None) -> float:
    rates = np.asarray(rates, dtype=float)
    if spec.kind == "minrate":
        return float(rates.min())
    if spec.kind == "sumrate":
        return float(rates.sum())
    if spec.kind == "minee":
        ees = np.asarray(ees, dtype=float)
        return float(np.min(spec.user_weights(ees.shape) * ees))
    return float(gee)


def evaluate(spec: UtilitySpec, real: RealChannelSet, P: np.ndarray, pm: PowerModel):
    """True utility plus the breakdown it came from."""
    br = rate_breakdown(real, P)
    ees = user_ee(br, P, pm)
    gee = global_ee(br, P, pm)
    return utility_eval(spec, br.r_total, ees, gee), br, ees, gee
