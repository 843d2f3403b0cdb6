"""Alternating minorize-maximize solver for covariances and RIS coefficients.

Each outer iteration maximizes a concave bound of the utility in one block
while the other is fixed, warm-started at the current point:

* covariances: projected-gradient ascent on the covariance bound over
  ``{P PSD, sum_{k,i} tr P[l, k, i] <= P_l}``, inside a Dinkelbach loop for
  energy-efficiency utilities;
* RIS: projected-gradient ascent on the RIS bound over a convex relaxation of
  the feasibility set, then normalization back onto the set; the result is
  kept only if it does not lower the bound.

Both steps can only raise the true utility, so the objective trace is
non-decreasing.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .channel import ComplexChannelSet
from .config import PowerModel, SystemConfig
from .impairment import ChannelMap, channel_map
from .metrics import RateError, UtilitySpec, evaluate, user_power
from .ris import (RisState, apply_ms_mask, ccp_halfspace, membership, normalize_T_I,
                  project_ball_halfspace, project_star_halfspace, project_T_U,
                  random_state, restore_T_SN_phase)
from .surrogate import (ExpansionPointP, ExpansionPointPhi, aggregate, bound_P_gradient,
                        bound_Phi_gradient, bounds_P, bounds_Phi, expansion_point_P,
                        expansion_point_Phi)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverSettings:
    max_outer_iters: int = 100
    outer_tol: float = 1e-4
    outer_patience: int = 1         # consecutive below-tolerance iterations before stopping
    inner_max_iters: int = 300
    inner_tol: float = 1e-6
    step_init: float = 0.1          # first step, relative to ||x|| / ||grad||
    backtrack: float = 0.5
    step_growth: float = 1.1
    step_restart: float = 10.0      # factor on the carried step at the start of each inner solve
    dinkelbach_tol: float = 1e-6
    dinkelbach_max_iters: int = 100
    epsilon_ccp: float = 0.05
    smoothing: tuple = (3e-2, 3e-3)   # soft-min temperatures, relative to the score scale

    def __post_init__(self):
        for name in ("max_outer_iters", "outer_tol", "outer_patience", "inner_max_iters", "inner_tol", "step_init",
                     "backtrack", "dinkelbach_tol", "dinkelbach_max_iters", "epsilon_ccp"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("outer_tol", "inner_tol", "backtrack", "dinkelbach_tol", "epsilon_ccp"):
            if not getattr(self, name) < 1:
                raise ValueError(f"{name} must be < 1")


@dataclass
class SolveReport:
    objective_trace: list
    covs: np.ndarray
    ris: RisState
    rates: np.ndarray          # (L, K) bits/s/Hz
    ees: np.ndarray            # (L, K)
    gee: float
    utility: float
    iterations: int
    acceptance: list = field(default_factory=list)     # one dict per RIS step
    lambda_traces: list = field(default_factory=list)  # Dinkelbach parameters per outer iteration
    feasibility: dict = field(default_factory=dict)
    converged: bool = False
    notes: list = field(default_factory=list)

    def write_csv(self, path) -> None:
        """Per-iteration trace rows followed by a summary row with final per-user rates."""
        L, K = self.rates.shape
        users = [f"rate_{l}_{k}" for l in range(L) for k in range(K)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row", "iteration", "utility", "gee"] + users)
            for t, u in enumerate(self.objective_trace):
                w.writerow(["trace", t, repr(float(u)), "", *[""] * len(users)])
            w.writerow(["summary", self.iterations, repr(self.utility), repr(self.gee),
                        *[repr(float(r)) for r in self.rates.ravel()]])


# --------------------------------------------------------------------------
# covariance constraints

def _sym(A):
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def project_capped_simplex(lam: np.ndarray, budget: float) -> np.ndarray:
    """Euclidean projection of a vector onto ``{x >= 0, sum x <= budget}``."""
    x = np.clip(lam, 0, None)
    if x.sum() <= budget:
        return x
    # water level s with sum max(lam - s, 0) = budget
    u = np.sort(lam)[::-1]
    css = np.cumsum(u) - budget
    idx = np.arange(1, u.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    s = css[rho] / (rho + 1)
    return np.clip(lam - s, 0, None)


def project_covariances(P: np.ndarray, budgets) -> np.ndarray:
    """Projection onto PSD matrices with per-BS trace budgets ``sum_{k,i} tr P[l, k, i] <= P_l``."""
    w, U = np.linalg.eigh(_sym(P))
    budgets = np.broadcast_to(np.asarray(budgets, dtype=float), (P.shape[0],))
    w_new = np.stack([project_capped_simplex(w[l].ravel(), budgets[l]).reshape(w[l].shape)
                      for l in range(P.shape[0])])
    return _sym((U * w_new[..., None, :]) @ np.swapaxes(U, -1, -2))


def covariance_violation(P: np.ndarray, budgets) -> dict:
    """Most negative eigenvalue and largest budget excess (both 0 when feasible)."""
    min_eig = float(np.linalg.eigvalsh(_sym(P)).min()) if P.size else 0.0
    spent = np.trace(P, axis1=-2, axis2=-1).reshape(P.shape[0], -1).sum(axis=1)
    excess = float(np.max(spent - np.asarray(budgets, dtype=float)))
    return {"neg_eig": max(-min_eig, 0.0), "budget_excess": max(excess, 0.0),
            "asym": float(np.max(np.abs(P - np.swapaxes(P, -1, -2)))) if P.size else 0.0}


def uniform_covariances(config: SystemConfig) -> np.ndarray:
    """Full budget split evenly over users, subbands and real dimensions."""
    L, K, N_i, B = config.L, config.K, config.N_i, config.N_B
    scale = config.budgets / (2 * K * N_i * B)
    return scale[:, None, None, None, None] * np.broadcast_to(np.eye(2 * B), (L, K, N_i, 2 * B, 2 * B))


# --------------------------------------------------------------------------
# generic inner solvers

@dataclass
class _Objective:
    """``value(x, mu) -> (smoothed, true, weights)`` and ``grad(x, weights)``."""
    value: Callable
    grad: Callable


def _inner(a, b) -> float:
    return float(np.sum(np.real(np.conj(a) * b)))


def projected_ascent(x0, obj: _Objective, project: Callable, settings: SolverSettings,
                     step: float | None = None, mu_schedule=(None,), window: int = 10):
    """Accelerated projected-gradient ascent with backtracking and restarts.

    Runs one stage per entry of ``mu_schedule`` (soft-min temperatures, ``None``
    for the exact objective), warm-starting each from the previous. Returns
    ``(x_best, true_value, step)``; ``x_best`` maximizes the true objective over
    all iterates, so the result never falls below the value at ``x0``.
    """
    x = x0
    _, best_val, _ = obj.value(x, None)
    best = x
    if step is not None:
        step *= settings.step_restart     # steps shrink near a previous solution; probe larger ones
    per_stage = max(1, settings.inner_max_iters // len(mu_schedule))
    for mu in mu_schedule:
        fx, ftx, wx = obj.value(x, mu)
        y, fy, wy, th = x, fx, wx, 1.0
        hist = [fx]
        for _ in range(per_stage):
            g = obj.grad(y, wy)
            if step is None or step < 1e-30:
                gn = np.sqrt(_inner(g, g))
                if gn == 0:
                    break
                step = settings.step_init * max(np.sqrt(_inner(x, x)), 1e-12) / gn
            while True:
                xn = project(y + step * g)
                d = xn - y
                dd = _inner(d, d)
                if dd == 0:
                    break
                fn, ftn, wn = obj.value(xn, mu)
                if fn >= fy + _inner(g, d) - dd / (2 * step):
                    break
                step *= settings.backtrack
                if step < 1e-30:     # no ascent along this gradient; re-estimate next time
                    dd = 0
                    break
            if dd == 0 or fn < fx:
                if y is x:                 # stationary at x for this stage
                    break
                y, fy, wy, th = x, fx, wx, 1.0     # momentum restart
                continue
            th_next = (1 + np.sqrt(1 + 4 * th * th)) / 2
            beta = (th - 1) / th_next
            x_old, x, fx, ftx, wx, th = x, xn, fn, ftn, wn, th_next
            if ftx > best_val:
                best, best_val = x, ftx
            y = x
            if beta > 0:
                try:
                    y = x + beta * (x - x_old)
                    fy, _, wy = obj.value(y, mu)
                except RateError:
                    y, th = x, 1.0
            if y is x:
                fy, wy = fx, wx
            step *= settings.step_growth
            hist.append(fx)
            if len(hist) > window and hist[-1] - hist[-1 - window] <= settings.inner_tol * max(abs(fx), 1.0):
                break
    return best, best_val, step


def _mu_schedule(spec: UtilitySpec, scores: np.ndarray, settings: SolverSettings):
    if not spec.is_min or scores.size == 1:
        return (None,)
    scale = max(float(np.mean(np.abs(scores))), 1e-12)
    return tuple(scale * m for m in settings.smoothing)


def dinkelbach(spec: UtilitySpec, inner: Callable, parts: Callable, settings: SolverSettings,
               x0, lam0: float = 0.0):
    """Parametric ratio maximization.

    ``parts(x) -> (numerators, costs)`` per user and ``inner(lam, x_start)``
    maximizes ``aggregate(numerators - lam * costs)`` from ``x_start``. For a
    sum-type spec the ratio is ``sum N / sum C``, for a min-type spec
    ``min N / C``. Returns ``(x, lam_star, lam_trace, F, converged)`` where
    ``F`` is the parametric value at the last parameter used.
    """
    def ratio(x):
        n, c = parts(x)
        return float(n.sum() / c.sum()) if not spec.is_min else float(np.min(n / c))

    lam, x = lam0, x0
    trace = [lam]
    F, converged = np.inf, False
    for _ in range(settings.dinkelbach_max_iters):
        x = inner(lam, x)
        n, c = parts(x)
        F, _ = aggregate(spec, n - lam * c)
        nxt = ratio(x)
        if F <= settings.dinkelbach_tol:
            converged = True
            break
        if nxt < lam:          # inexact inner step; the ratio cannot improve further
            break
        lam = nxt
        trace.append(lam)
    if not converged:
        log.info("dinkelbach: no convergence in %d iterations (F=%.3g)", settings.dinkelbach_max_iters, F)
    return x, ratio(x), trace, float(F), converged


# --------------------------------------------------------------------------
# block updates

def _cov_costs(P, pm: PowerModel):
    return pm.p_c + pm.eta * user_power(P)


def _cov_objective(exp: ExpansionPointP, spec: UtilitySpec, lam: float, pm: PowerModel | None):
    a = spec.user_weights(exp.P_prev.shape[:2]) if spec.kind == "minee" else np.ones(exp.P_prev.shape[:2])
    eye = np.eye(exp.P_prev.shape[-1])

    def scores(P):
        s = a * bounds_P(exp, P)
        return s - lam * _cov_costs(P, pm) if lam else s

    def value(P, mu):
        s = scores(P)
        fs, w = aggregate(spec, s, mu)
        ft = fs if mu is None else aggregate(spec, s)[0]
        return fs, ft, w

    def grad(P, w):
        G = bound_P_gradient(exp, P, a * w)
        if lam:
            G = G - lam * pm.eta * w[:, :, None, None, None] * eye
        return G

    return _Objective(value, grad), scores


def update_covariances(exp: ExpansionPointP, spec: UtilitySpec, settings: SolverSettings,
                       budgets, lam: float = 0.0, power_model: PowerModel | None = None,
                       start: np.ndarray | None = None, step: float | None = None):
    """Maximize the covariance bound (minus ``lam`` times cost) from a warm start.

    Returns ``(P, value, step)``; ``P`` never scores below the start.
    """
    x0 = exp.P_prev if start is None else start
    obj, scores = _cov_objective(exp, spec, lam, power_model)
    mus = _mu_schedule(spec, scores(x0), settings)
    P, val, step = projected_ascent(x0, obj, lambda X: project_covariances(X, budgets),
                                    settings, step, mus)
    return P, val, step


def _ee_parts(exp: ExpansionPointP, spec: UtilitySpec, pm: PowerModel):
    a = spec.user_weights(exp.P_prev.shape[:2]) if spec.kind == "minee" else 1.0

    def parts(P):
        # for GEE, sum of per-user costs is L K p_c + eta sum tr P
        return a * bounds_P(exp, P), _cov_costs(P, pm)
    return parts


def update_covariances_ee(exp: ExpansionPointP, spec: UtilitySpec, settings: SolverSettings,
                          budgets, power_model: PowerModel, step: float | None = None):
    """Dinkelbach over the covariance bound; falls back to the warm start if the ratio drops."""
    parts = _ee_parts(exp, spec, power_model)
    steps = [step]

    def inner(lam, start):
        P, _, steps[0] = update_covariances(exp, spec, settings, budgets, lam, power_model,
                                            start=start, step=steps[0])
        return P

    P, lam_star, trace, F, ok = dinkelbach(spec, inner, parts, settings, exp.P_prev)
    n0, c0 = parts(exp.P_prev)
    base = float(n0.sum() / c0.sum()) if not spec.is_min else float(np.min(n0 / c0))
    if lam_star < base:
        P, lam_star = exp.P_prev, base
    return P, lam_star, steps[0], {"lambdas": trace, "F": F, "converged": ok}


def _ris_scale(spec: UtilitySpec, P: np.ndarray, pm: PowerModel | None):
    """Per-user multipliers that turn rate bounds into utility scores at fixed power."""
    shape = P.shape[:2]
    if spec.kind == "minee":
        return spec.user_weights(shape) / _cov_costs(P, pm)
    if spec.kind == "gee":
        return np.full(shape, 1.0 / _cov_costs(P, pm).sum())
    return np.ones(shape)


def _ris_projector(state: RisState, set_kind: str, op_mode: str, epsilon: float):
    mask = state.mask
    if set_kind == "T_U":
        return lambda x: project_T_U(x * mask) * mask
    hs = ccp_halfspace(state.phi, epsilon)
    if set_kind == "T_SN" and op_mode == "ES":
        return lambda x: project_star_halfspace(x, hs)
    return lambda x: project_ball_halfspace(x * mask, hs) * mask


def update_ris(exp: ExpansionPointPhi, spec: UtilitySpec, settings: SolverSettings,
               set_kind: str, op_mode: str, state: RisState, power_model: PowerModel | None = None,
               rng: np.random.Generator | None = None, step: float | None = None):
    """One RIS block update with normalization and the non-decrease acceptance rule.

    Returns ``(new_state, decision, step)`` where ``decision`` records the bound
    at the previous and candidate states and whether the candidate was kept.
    """
    if state.phi.size == 0 or not np.any(exp.cmap.ris_of >= 0):
        return state.copy(), {"accepted": False, "reason": "no RIS-covered users"}, step
    a = _ris_scale(spec, exp.P, power_model)
    mask = state.mask

    def value(phi, mu):
        s = a * bounds_Phi(exp, phi)
        fs, w = aggregate(spec, s, mu)
        return fs, (fs if mu is None else aggregate(spec, s)[0]), w

    def grad(phi, w):
        return bound_Phi_gradient(exp, phi, a * w) * mask

    obj = _Objective(value, grad)
    start = apply_ms_mask(state).phi
    prev_val = value(start, None)[0]
    mus = _mu_schedule(spec, a * bounds_Phi(exp, start), settings)
    project = _ris_projector(state, set_kind, op_mode, settings.epsilon_ccp)
    phi, _, step = projected_ascent(start, obj, project, settings, step, mus)

    cand = RisState(phi, state.ms_groups, list(state.notes))
    if set_kind in ("T_I", "T_SN"):
        cand = normalize_T_I(cand, rng)
        if set_kind == "T_SN" and op_mode == "ES":
            cand.phi = restore_T_SN_phase(cand.phi)
    cand = apply_ms_mask(cand)
    cand_val = value(cand.phi, None)[0]
    accepted = cand_val >= prev_val
    decision = {"accepted": bool(accepted), "prev": prev_val, "candidate": cand_val}
    return (cand if accepted else state.copy()), decision, step


# --------------------------------------------------------------------------
# alternating driver

def ao_solve(config: SystemConfig, channels: ComplexChannelSet, spec: UtilitySpec,
             settings: SolverSettings | None = None, rng: np.random.Generator | None = None,
             optimize_ris: bool = True, ris_init: RisState | None = None,
             covs_init: np.ndarray | None = None, cmap: ChannelMap | None = None) -> SolveReport:
    """Alternate covariance and RIS updates until the utility stops improving."""
    settings = settings or SolverSettings(epsilon_ccp=config.epsilon_ccp)
    rng = rng if rng is not None else np.random.default_rng()
    pm = config.power_model
    budgets = config.budgets
    cmap = cmap or channel_map(channels, config.iqi, config.sigma2)
    N = channels.G_bs.shape[0]

    P = uniform_covariances(config) if covs_init is None else covs_init.copy()
    ris = ris_init.copy() if ris_init is not None else random_state(
        rng, N, config.N_R, config.N_s, config.feasibility_set, config.op_mode)
    real = cmap.real_channels(ris.phi)
    u, *_ = evaluate(spec, real, P, pm)
    report = SolveReport(objective_trace=[u], covs=P, ris=ris, rates=None, ees=None, gee=0.0,
                         utility=u, iterations=0)
    has_ris = optimize_ris and ris.phi.size > 0 and np.any(cmap.ris_of >= 0)
    stepP = stepR = None
    quiet = 0
    t0 = time.perf_counter()
    for it in range(1, settings.max_outer_iters + 1):
        expP = expansion_point_P(real, P)
        if spec.is_ee:
            P, _, stepP, info = update_covariances_ee(expP, spec, settings, budgets, pm, stepP)
            report.lambda_traces.append(info)
        else:
            P, _, stepP = update_covariances(expP, spec, settings, budgets, step=stepP)
        if has_ris:
            expR = expansion_point_Phi(cmap, P, ris.phi)
            ris, decision, stepR = update_ris(expR, spec, settings, config.feasibility_set,
                                              config.op_mode, ris, pm, rng, stepR)
            decision["iteration"] = it
            report.acceptance.append(decision)
            real = cmap.real_channels(ris.phi)
        u_prev, (u, *_) = u, evaluate(spec, real, P, pm)
        report.objective_trace.append(u)
        report.iterations = it
        quiet = quiet + 1 if abs(u - u_prev) <= settings.outer_tol * max(abs(u_prev), 1e-12) else 0
        if quiet >= settings.outer_patience:
            report.converged = True
            break
    log.debug("ao_solve: %d iterations, %.2fs, utility %.6g", report.iterations,
              time.perf_counter() - t0, u)

    u, br, ees, gee = evaluate(spec, real, P, pm)
    report.covs, report.ris, report.utility = P, ris, u
    report.rates, report.ees, report.gee = br.r_total, ees, gee
    feas = covariance_violation(P, budgets)
    m = membership(ris, config.feasibility_set)
    feas.update({"ris_ok": m.ok, "ris_worst": m.worst, "ris_where": m.where})
    report.feasibility = feas
    report.notes.extend(ris.notes)
    return report
