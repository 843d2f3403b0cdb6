"""Reusable property checks shared by unit and acceptance tests."""
import numpy as np

from risopt.metrics import rate_breakdown
from risopt.ris import random_state
from risopt.solver import project_covariances
from risopt.surrogate import (bound_P_gradient, bound_Phi_gradient, bounds_P, bounds_Phi,
                              expansion_point_P, expansion_point_Phi)

from conftest import random_covariances, random_instance


def true_rates(cmap, phi, P):
    return rate_breakdown(cmap.real_channels(phi), P).r_total


def perturbed_covariances(rng, P, budgets):
    """Feasible covariances near or far from ``P``."""
    L, K, N_i, d, _ = P.shape
    if rng.random() < 0.5:
        return random_covariances(rng, L, K, N_i, d // 2, budgets)
    E = rng.standard_normal(P.shape)
    scale = rng.choice([1e-3, 1e-1, 1.0]) * np.max(np.abs(P))
    return project_covariances(P + scale * (E + np.swapaxes(E, -1, -2)), budgets)


def perturbed_phi(rng, cfg, phi):
    if rng.random() < 0.5:
        return random_state(rng, cfg.N, cfg.N_R, cfg.N_s, cfg.feasibility_set, cfg.op_mode).phi
    step = rng.choice([1e-3, 1e-1, 1.0])
    return phi + step * (rng.standard_normal(phi.shape) + 1j * rng.standard_normal(phi.shape))


def tightness_and_bound(rng, n_points=200, iqi=None):
    """Return (max |bound - rate| at the expansion point, max (bound - rate) elsewhere), per block."""
    cfg, ch, cmap, ris = random_instance(rng, iqi=bool(rng.random() < 0.5) if iqi is None else iqi,
                                         N_U=2, N_B=2)
    P = random_covariances(rng, cfg.L, cfg.K, cfg.N_i, cfg.N_B, cfg.budgets)
    r0 = true_rates(cmap, ris.phi, P)

    expP = expansion_point_P(cmap.real_channels(ris.phi), P)
    expR = expansion_point_Phi(cmap, P, ris.phi)
    touch = (np.max(np.abs(bounds_P(expP, P) - r0)),
             np.max(np.abs(bounds_Phi(expR, ris.phi) - r0)))
    gapP = gapR = -np.inf
    for _ in range(n_points):
        Q = perturbed_covariances(rng, P, cfg.budgets)
        gapP = max(gapP, np.max((bounds_P(expP, Q) - true_rates(cmap, ris.phi, Q))))
        phi = perturbed_phi(rng, cfg, ris.phi)
        gapR = max(gapR, np.max((bounds_Phi(expR, phi) - true_rates(cmap, phi, P))))
    return touch, (gapP, gapR)


def _rel(fd, an):
    return abs(fd - an) / max(abs(fd), abs(an))


def gradient_errors(rng, n_coords=50):
    """Worst relative FD error of both bound gradients over random significant coordinates."""
    cfg, ch, cmap, ris = random_instance(rng, L=2, K=2, N_R=6, N_i=2, iqi=True)
    P = random_covariances(rng, cfg.L, cfg.K, cfg.N_i, cfg.N_B, cfg.budgets)
    w = rng.uniform(0.1, 1.0, size=(cfg.L, cfg.K))

    # covariances: move far enough from the expansion point to exercise the nonlinear term
    expP = expansion_point_P(cmap.real_channels(ris.phi), P)
    X = perturbed_covariances(rng, P, cfg.budgets)
    X = X + 0.05 * np.abs(X).max() * np.eye(X.shape[-1])     # interior, so +-2h steps stay PSD
    f = lambda Y: float(np.sum(w * bounds_P(expP, Y)))
    G = bound_P_gradient(expP, X, w)
    errs_P = []
    cand = np.argwhere(np.abs(G) >= 1e-3 * np.abs(G).max())
    for idx in cand[rng.choice(len(cand), n_coords, replace=len(cand) < n_coords)]:
        idx = tuple(idx)
        a, b = idx[-2], idx[-1]
        E = np.zeros_like(X)
        E[idx[:-2] + (a, b)] += 0.5
        E[idx[:-2] + (b, a)] += 0.5
        h = 1e-4 * np.abs(X).max()
        fd = (8 * (f(X + h * E) - f(X - h * E)) - f(X + 2 * h * E) + f(X - 2 * h * E)) / (12 * h)
        errs_P.append(_rel(fd, G[idx]))

    expR = expansion_point_Phi(cmap, P, ris.phi)
    phi = perturbed_phi(rng, cfg, ris.phi)
    g = lambda v: float(np.sum(w * bounds_Phi(expR, v)))
    Gr = bound_Phi_gradient(expR, phi, w)
    errs_R = []
    flat = np.concatenate([Gr.real.ravel(), Gr.imag.ravel()])
    cand = np.flatnonzero(np.abs(flat) >= 1e-3 * np.abs(flat).max())
    for c in rng.choice(cand, n_coords, replace=len(cand) < n_coords):
        E = np.zeros(2 * phi.size)
        E[c] = 1.0
        E = (E[:phi.size] + 1j * E[phi.size:]).reshape(phi.shape)
        h = 1e-3     # the bound is quadratic in phi, so central differences are exact
        fd = (g(phi + h * E) - g(phi - h * E)) / (2 * h)
        errs_R.append(_rel(fd, flat[c]))
    return max(errs_P), max(errs_R)
