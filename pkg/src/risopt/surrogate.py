"""Concave minorizers of user rates and their gradients.

Two bounds are used by the alternating solver, both tight at their expansion
point:

* in the covariances (RIS fixed): keep ``0.5 log2|D + S|`` and replace
  ``-0.5 log2|D|`` by its tangent plane, which lies above the concave term;
* in the RIS coefficients (covariances fixed): the log-det inequality
  ``ln|I + D^-1 V V^T| >= ln|I + Db^-1 Vb Vb^T| - tr(Db^-1 Vb Vb^T)
  + 2 tr(Vb^T Db^-1 V) - tr((Db^-1 - (Db + Vb Vb^T)^-1)(V V^T + D))``
  with ``V = H_own(phi) P^{1/2}``, which is concave since ``V`` is affine and
  ``V V^T + D`` convex quadratic in ``phi``.

Rates are in the real domain, hence the extra factor 1/2 on every log-det.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .impairment import ChannelMap, RealChannelSet
from .metrics import LN2, UtilitySpec, logdet, own_channels, rate_breakdown

HALF_LN2 = 0.5 / LN2


def _T(A):
    return np.swapaxes(A, -1, -2)


def _trace_prod(A, B):
    """``tr(A B)`` over the last two axes for symmetric ``B``."""
    return np.sum(A * B, axis=(-2, -1))


def _sym(A):
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def _spd_inv(A):
    return _sym(np.linalg.inv(A))


def psd_sqrt(P: np.ndarray) -> np.ndarray:
    """Symmetric square root with negative eigenvalues clipped to zero."""
    w, U = np.linalg.eigh(_sym(P))
    return _sym((U * np.sqrt(np.clip(w, 0, None))[..., None, :]) @ np.swapaxes(U, -1, -2))


def total_received(real: RealChannelSet, P: np.ndarray) -> np.ndarray:
    """``D + S = C + sum_j H_j P_j H_j^T`` for every user and subband."""
    H = real.H
    return real.C_noise + (H @ P.sum(axis=1) @ _T(H)).sum(axis=2)


# --------------------------------------------------------------------------
# bound in the covariances

@dataclass(frozen=True)
class ExpansionPointP:
    real: RealChannelSet
    P_prev: np.ndarray
    D_prev: np.ndarray     # (L, K, N_i, 2U, 2U)
    r2_prev: np.ndarray    # 0.5 log2|D_prev|, (L, K, N_i)
    W: np.ndarray          # H^T D_prev^-1 H / (2 ln 2), (L, K, L, N_i, 2B, 2B)
    rates_prev: np.ndarray  # true total rates at P_prev


def expansion_point_P(real: RealChannelSet, P_prev: np.ndarray) -> ExpansionPointP:
    br = rate_breakdown(real, P_prev)
    Dinv = _spd_inv(br.D)
    W = HALF_LN2 * (_T(real.H) @ Dinv[:, :, None] @ real.H)
    return ExpansionPointP(real=real, P_prev=P_prev.copy(), D_prev=br.D,
                           r2_prev=0.5 * logdet(br.D, "D") / LN2, W=_sym(W),
                           rates_prev=br.r_total)


def _linear_term(exp: ExpansionPointP, P: np.ndarray) -> np.ndarray:
    """Tangent-plane increment of ``0.5 log2|D|`` at ``P``, (L, K, N_i)."""
    dP = P - exp.P_prev
    dPtot = dP.sum(axis=1)
    every = _trace_prod(exp.W, dPtot).sum(axis=2)
    return every - _trace_prod(own_channels(exp.W), dP)


def bounds_P(exp: ExpansionPointP, P: np.ndarray) -> np.ndarray:
    """Lower bound of every user's total rate at covariances ``P``, (L, K)."""
    r1 = 0.5 * logdet(total_received(exp.real, P), "D+S") / LN2
    return np.sum(r1 - exp.r2_prev - _linear_term(exp, P), axis=-1)


def bound_P_gradient(exp: ExpansionPointP, P: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Gradient of ``sum_lk weights[l, k] * bound_lk`` w.r.t. every ``P[j, m, i]``."""
    H = exp.real.H
    Tinv = _spd_inv(total_received(exp.real, P))
    A = HALF_LN2 * (_T(H) @ Tinv[:, :, None] @ H) - exp.W
    G = np.tensordot(weights, A, axes=([0, 1], [0, 1]))          # same for every stream of BS j
    grad = G[:, None] + weights[:, :, None, None, None] * own_channels(exp.W)
    return _sym(grad)


def rate_bound_P(exp: ExpansionPointP, P: np.ndarray, l: int, k: int):
    """Bound value for user ``(l, k)`` and its gradient w.r.t. all covariances."""
    w = np.zeros(P.shape[:2])
    w[l, k] = 1.0
    return float(bounds_P(exp, P)[l, k]), bound_P_gradient(exp, P, w)


# --------------------------------------------------------------------------
# bound in the RIS coefficients

@dataclass(frozen=True)
class ExpansionPointPhi:
    cmap: ChannelMap
    P: np.ndarray
    phi_prev: np.ndarray
    P_sqrt: np.ndarray     # (L, K, N_i, 2B, 2B)
    Ptot: np.ndarray       # (L, N_i, 2B, 2B)
    Q: np.ndarray          # Db^-1 - (Sb + Db)^-1
    Z: np.ndarray          # Db^-1 Vb P^{1/2}, coefficient of the linear term
    const: np.ndarray      # r_prev - tr(Sb Db^-1) / (2 ln 2)
    rates_prev: np.ndarray  # per subband, (L, K, N_i)


def expansion_point_Phi(cmap: ChannelMap, P: np.ndarray, phi_prev: np.ndarray) -> ExpansionPointPhi:
    real = cmap.real_channels(phi_prev)
    br = rate_breakdown(real, P)
    Dinv = _spd_inv(br.D)
    Tinv = _spd_inv(br.D + br.S)
    Ps = psd_sqrt(P)
    Vb = own_channels(real.H) @ Ps
    Z = Dinv @ Vb @ Ps
    const = br.r - HALF_LN2 * _trace_prod(Dinv, br.S)
    return ExpansionPointPhi(cmap=cmap, P=P.copy(), phi_prev=phi_prev.copy(), P_sqrt=Ps,
                             Ptot=P.sum(axis=1), Q=_sym(Dinv - Tinv), Z=Z, const=const,
                             rates_prev=br.r)


def _phi_terms(exp: ExpansionPointPhi, phi: np.ndarray):
    H = exp.cmap.channels(phi)
    HP = H @ exp.Ptot
    return H, HP


def bounds_Phi(exp: ExpansionPointPhi, phi: np.ndarray, per_subband: bool = False) -> np.ndarray:
    """Lower bound of every user's total rate at RIS coefficients ``phi``, (L, K)."""
    H, HP = _phi_terms(exp, phi)
    T = exp.cmap.C_noise + (HP @ _T(H)).sum(axis=2)
    lin = 2 * np.sum(exp.Z * own_channels(H), axis=(-2, -1))
    quad = _trace_prod(exp.Q, T)
    val = exp.const + HALF_LN2 * (lin - quad)
    return val if per_subband else val.sum(axis=-1)


def bound_Phi_gradient(exp: ExpansionPointPhi, phi: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Gradient ``d/dRe + j d/dIm`` of ``sum_lk weights * bound_lk``, shaped like ``phi``."""
    H, HP = _phi_terms(exp, phi)
    G_H = -2 * (exp.Q[:, :, None] @ HP)
    L = H.shape[0]
    G_H[np.arange(L), :, np.arange(L)] += 2 * exp.Z
    G_H *= HALF_LN2 * weights[:, :, None, None, None, None]
    user = exp.cmap.channel_gradient(G_H)
    return exp.cmap.scatter_gradient(user, phi.shape)


def rate_bound_Phi(exp: ExpansionPointPhi, ris, l: int, k: int):
    """Bound value for user ``(l, k)`` and its gradient w.r.t. every coefficient."""
    phi = ris.phi if hasattr(ris, "phi") else ris
    w = np.zeros(exp.P.shape[:2])
    w[l, k] = 1.0
    return float(bounds_Phi(exp, phi)[l, k]), bound_Phi_gradient(exp, phi, w)


# --------------------------------------------------------------------------
# utilities of bounded rates

def aggregate(spec: UtilitySpec, scores: np.ndarray, mu: float | None = None):
    """Combine per-user scores into a utility value and per-user gradient weights.

    Sum-type utilities weight every user by one. Min-type utilities return the
    minimum and a one-hot weight on the first minimizer, or with ``mu`` set the
    soft minimum ``-mu log sum exp(-s / mu)`` and its softmax weights.
    """
    if not spec.is_min:
        return float(scores.sum()), np.ones_like(scores)
    if mu is None:
        idx = np.unravel_index(np.argmin(scores), scores.shape)   # first minimizer
        w = np.zeros_like(scores)
        w[idx] = 1.0
        return float(scores[idx]), w
    s = -(scores - scores.min()) / mu
    e = np.exp(s)
    return float(scores.min() - mu * np.log(e.sum())), e / e.sum()


def surrogate_utility(spec: UtilitySpec, bounds: np.ndarray, grads: np.ndarray, *,
                      lam: float = 0.0, costs: np.ndarray | None = None,
                      cost_grads: np.ndarray | None = None,
                      scale: np.ndarray | None = None):
    """Utility of bounded rates and a (sub)gradient.

    ``bounds`` and ``grads`` are per user (leading axes ``(L, K)``). For the
    parametric energy-efficiency problems the per-user score is
    ``scale * bound - lam * cost``; ``scale`` holds MinEE weights, or
    reciprocal denominators when the power is fixed.
    """
    a = spec.user_weights(bounds.shape) if scale is None else scale
    scores = a * bounds
    grad_users = a.reshape(a.shape + (1,) * (grads.ndim - 2)) * grads
    if lam and costs is not None:
        scores = scores - lam * costs
        grad_users = grad_users - lam * cost_grads
    value, w = aggregate(spec, scores)
    return value, np.tensordot(w, grad_users, axes=([0, 1], [0, 1]))
