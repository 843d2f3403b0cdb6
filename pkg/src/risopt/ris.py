"""RIS coefficient states and their feasibility sets.

``phi[n, m, s]`` is the coefficient of element ``m`` of RIS ``n`` in sector
``s``. The per-element sets are

* ``T_U``: ``sum_s |phi|^2 <= 1`` (passive)
* ``T_I``: ``sum_s |phi|^2 == 1`` (passive, lossless)
* ``T_SN``: ``T_I`` plus ``Re{conj(phi_1) phi_2} == 0`` (STAR phase coupling)

Vector helpers operate on arrays whose last axis holds an element's ``N_s``
sector coefficients, so they apply to whole states at once.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class RisState:
    phi: np.ndarray                        # (N, Nr, N_s) complex
    ms_groups: np.ndarray | None = None    # (N, Nr) active sector per element (MS mode)
    notes: list = field(default_factory=list)

    @property
    def N_s(self) -> int:
        return self.phi.shape[-1]

    def copy(self) -> "RisState":
        groups = None if self.ms_groups is None else self.ms_groups.copy()
        return RisState(self.phi.copy(), groups, list(self.notes))

    @property
    def mask(self) -> np.ndarray:
        """Boolean ``phi``-shaped array of coefficients allowed to be nonzero."""
        if self.ms_groups is None:
            return np.ones(self.phi.shape, dtype=bool)
        return self.ms_groups[..., None] == np.arange(self.N_s)


@dataclass(frozen=True)
class Membership:
    ok: bool
    worst: float
    where: tuple | None    # (n, m) of the worst element

    def __bool__(self):
        return self.ok


def membership(state: RisState, set_kind: str, tol: float = 1e-9) -> Membership:
    """Check every element against ``set_kind`` and report the worst violation."""
    phi = state.phi
    if phi.size == 0:
        return Membership(True, 0.0, None)
    energy = np.sum(np.abs(phi) ** 2, axis=-1)
    if set_kind == "T_U":
        viol = np.maximum(energy - 1, 0)
    elif set_kind in ("T_I", "T_SN"):
        viol = np.abs(energy - 1)
        if set_kind == "T_SN":
            if state.N_s != 2:
                raise ValueError("T_SN is defined for N_s = 2 only")
            viol = np.maximum(viol, np.abs(np.real(np.conj(phi[..., 0]) * phi[..., 1])))
    else:
        raise ValueError(f"unknown feasibility set {set_kind!r}")
    if state.ms_groups is not None:
        viol = np.maximum(viol, np.max(np.abs(np.where(state.mask, 0, phi)), axis=-1))
    idx = np.unravel_index(np.argmax(viol), viol.shape)
    worst = float(viol[idx])
    return Membership(worst <= tol, worst, tuple(int(i) for i in idx))


def project_T_U(vec: np.ndarray) -> np.ndarray:
    """Euclidean projection of each element's sector vector onto the unit ball."""
    norm = np.linalg.norm(vec, axis=-1, keepdims=True)
    return vec / np.maximum(norm, 1.0)


def normalize_T_I(state: RisState, rng: np.random.Generator | None = None) -> RisState:
    """Scale each element's sector vector to unit norm.

    Zero vectors have no direction; they are replaced by a random unit vector
    (within the element's active sector in MS mode) and the event is noted.
    """
    out = state.copy()
    norm = np.linalg.norm(out.phi, axis=-1, keepdims=True)
    zero = norm[..., 0] < 1e-300
    if np.any(zero):
        rng = rng or np.random.default_rng()
        draw = rng.standard_normal(out.phi.shape) + 1j * rng.standard_normal(out.phi.shape)
        draw = np.where(out.mask, draw, 0)
        draw /= np.linalg.norm(draw, axis=-1, keepdims=True)
        out.phi = np.where(zero[..., None], draw, out.phi)
        norm = np.where(zero[..., None], 1.0, norm)
        msg = f"normalize_T_I: {int(zero.sum())} zero element(s) re-randomized"
        log.info(msg)
        out.notes.append(msg)
    out.phi = out.phi / norm
    return out


def restore_T_SN_phase(phi: np.ndarray) -> np.ndarray:
    """Rotate the second coefficient to the nearest phase orthogonal to the first."""
    phi = phi.copy()
    p1, p2 = phi[..., 0], phi[..., 1]
    a1 = np.angle(p1)
    d = np.angle(p2 * np.conj(p1))          # phase of p2 relative to p1
    target = np.where(d >= 0, np.pi / 2, -np.pi / 2)
    rot = np.abs(p2) * np.exp(1j * (a1 + target))
    phi[..., 1] = np.where((np.abs(p1) > 0) & (np.abs(p2) > 0), rot, p2)
    return phi


@dataclass(frozen=True)
class Halfspace:
    """``normal . x >= offset`` in the real coordinates ``x = [Re v; Im v]``."""

    normal: np.ndarray   # (..., 2 N_s)
    offset: np.ndarray   # (...)

    def value(self, vec: np.ndarray) -> np.ndarray:
        return np.sum(self.normal * to_real(vec), axis=-1)


def to_real(vec: np.ndarray) -> np.ndarray:
    return np.concatenate([vec.real, vec.imag], axis=-1)


def from_real(x: np.ndarray) -> np.ndarray:
    h = x.shape[-1] // 2
    return x[..., :h] + 1j * x[..., h:]


def ccp_halfspace(prev: np.ndarray, epsilon: float) -> Halfspace:
    """Linearized ``sum_s |v_s|^2 >= 1`` about ``prev``, relaxed by ``epsilon``.

    ``sum_s 2 Re{conj(prev_s) v_s} - |prev_s|^2 >= 1 - epsilon``.
    """
    prev = np.asarray(prev, dtype=complex)
    energy = np.sum(np.abs(prev) ** 2, axis=-1)
    return Halfspace(2 * to_real(prev), 1 - epsilon + energy)


def _project_ball_real(x):
    return x / np.maximum(np.linalg.norm(x, axis=-1, keepdims=True), 1.0)


def project_ball_halfspace(vec: np.ndarray, hs: Halfspace) -> np.ndarray:
    """Euclidean projection onto ``{||v|| <= 1} ∩ hs``, element-wise, in closed form.

    If neither the ball nor the half-space projection alone is feasible the
    answer lies on the circle where the sphere meets the hyperplane.
    """
    x = to_real(np.asarray(vec, dtype=complex))
    a, b = hs.normal, np.asarray(hs.offset, dtype=float)
    an = np.linalg.norm(a, axis=-1)
    if np.any(b > an + 1e-12):
        raise ValueError("empty intersection of unit ball and CCP half-space")
    safe_an = np.where(an > 0, an, 1.0)
    u = a / safe_an[..., None]
    beta = b / safe_an                   # signed distance of the hyperplane from 0

    ball = _project_ball_real(x)
    ok_ball = np.sum(a * ball, axis=-1) >= b - 1e-15
    t = np.sum(u * x, axis=-1)
    half = x + np.maximum(beta - t, 0)[..., None] * u
    ok_half = np.linalg.norm(half, axis=-1) <= 1 + 1e-15

    center = beta[..., None] * u
    radius = np.sqrt(np.maximum(1 - beta ** 2, 0))
    tang = x - t[..., None] * u
    tn = np.linalg.norm(tang, axis=-1, keepdims=True)
    # any point of the circle is closest when x lies on the axis
    fallback = _any_orthogonal(u)
    direction = np.where(tn > 1e-300, tang / np.where(tn > 0, tn, 1.0), fallback)
    circle = center + radius[..., None] * direction

    out = np.where(ok_ball[..., None], ball, np.where(ok_half[..., None], half, circle))
    out = np.where((an > 0)[..., None], out, ball)
    return from_real(out)


def _any_orthogonal(u):
    e = np.zeros_like(u)
    idx = np.argmin(np.abs(u), axis=-1)
    np.put_along_axis(e, idx[..., None], 1.0, axis=-1)
    e -= np.sum(e * u, axis=-1, keepdims=True) * u
    return e / np.linalg.norm(e, axis=-1, keepdims=True)


def _project_star_caps_real(x):
    """Projection onto ``|v1 + v2| <= 1, |v1 - v2| <= 1`` in real coordinates (N_s = 2).

    In the rotated coordinates ``(v1 +- v2) / sqrt 2`` the set is a product of
    two discs of radius ``1 / sqrt 2``.
    """
    v = from_real(x)
    s = (v[..., 0] + v[..., 1]) / np.sqrt(2)
    d = (v[..., 0] - v[..., 1]) / np.sqrt(2)
    r = 1 / np.sqrt(2)
    s = s / np.maximum(np.abs(s) / r, 1.0)
    d = d / np.maximum(np.abs(d) / r, 1.0)
    out = np.stack([(s + d) / np.sqrt(2), (s - d) / np.sqrt(2)], axis=-1)
    return to_real(out)


def project_star_halfspace(vec: np.ndarray, hs: Halfspace, tol: float = 1e-13) -> np.ndarray:
    """Projection onto the STAR caps intersected with ``hs`` (N_s = 2).

    The multiplier ``lam >= 0`` of the half-space is found by bisection on
    ``normal . proj_caps(x + lam normal) = offset``, which is monotone in ``lam``.
    """
    x = to_real(np.asarray(vec, dtype=complex))
    a, b = hs.normal, np.asarray(hs.offset, dtype=float)
    z = _project_star_caps_real(x)
    need = np.sum(a * z, axis=-1) < b
    if not np.any(need):
        return from_real(z)
    lo = np.zeros(b.shape)
    hi = np.ones(b.shape)
    for _ in range(200):
        g = np.sum(a * _project_star_caps_real(x + hi[..., None] * a), axis=-1)
        grow = need & (g < b)
        if not np.any(grow):
            break
        hi = np.where(grow, hi * 2, hi)
    else:
        raise ValueError("empty intersection of STAR caps and CCP half-space")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g = np.sum(a * _project_star_caps_real(x + mid[..., None] * a), axis=-1)
        lo = np.where(g < b, mid, lo)
        hi = np.where(g < b, hi, mid)
        if np.max(np.where(need, hi - lo, 0)) < tol:
            break
    zl = _project_star_caps_real(x + hi[..., None] * a)
    return from_real(np.where(need[..., None], zl, z))


def ms_partition(rng: np.random.Generator, N_R: int, N_s: int) -> list[np.ndarray]:
    """Random split of ``range(N_R)`` into ``N_s`` groups of size ``>= N_R // N_s``."""
    if N_R < N_s:
        raise ValueError(f"cannot split {N_R} elements into {N_s} non-empty groups")
    perm = rng.permutation(N_R)
    sizes = np.full(N_s, N_R // N_s)
    sizes[: N_R % N_s] += 1
    rng.shuffle(sizes)
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    return [np.sort(perm[bounds[s]:bounds[s + 1]]) for s in range(N_s)]


def groups_to_assignment(groups: list[np.ndarray], N_R: int) -> np.ndarray:
    out = np.full(N_R, -1)
    for s, g in enumerate(groups):
        out[g] = s
    return out


def apply_ms_mask(state: RisState, groups=None) -> RisState:
    """Zero every coefficient outside its element's group.

    ``groups`` is either a ``(N, Nr)`` assignment array or, per RIS, a list of
    index groups; it defaults to the state's own grouping.
    """
    out = state.copy()
    if groups is not None:
        if isinstance(groups, np.ndarray) and groups.ndim == 2:
            out.ms_groups = groups.copy()
        else:
            out.ms_groups = np.stack([groups_to_assignment(g, state.phi.shape[1]) for g in groups])
    if out.ms_groups is not None:
        out.phi = np.where(out.mask, out.phi, 0)
    return out


def random_state(rng: np.random.Generator, N: int, N_R: int, N_s: int,
                 set_kind: str = "T_I", op_mode: str = "ES") -> RisState:
    """Random feasible start: uniform phases, equal energy across active sectors."""
    phase = rng.uniform(0, 2 * np.pi, size=(N, N_R, N_s))
    groups = None
    if op_mode == "MS" and N_s > 1:
        groups = np.stack([groups_to_assignment(ms_partition(rng, N_R, N_s), N_R)
                           for _ in range(N)]) if N else np.zeros((0, N_R), int)
        phi = np.exp(1j * phase)
        state = apply_ms_mask(RisState(phi), groups)
        return state
    phi = np.exp(1j * phase) / np.sqrt(N_s)
    if set_kind == "T_SN":
        sign = rng.choice([-1.0, 1.0], size=(N, N_R))
        phi[..., 1] = np.abs(phi[..., 1]) * np.exp(1j * (phase[..., 0] + sign * np.pi / 2))
    return RisState(phi)
