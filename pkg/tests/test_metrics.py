import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from risopt.config import PowerModel
from risopt.impairment import RealChannelSet, real_decompose
from risopt.metrics import (RateError, UtilitySpec, covariance_terms, evaluate, global_ee,
                            interference_covariance, rate_breakdown, signal_covariance, user_ee,
                            user_power, user_rate, utility_eval)

from conftest import random_covariances
from oracles import complex_rate, proper_real_covariance


def real_set(H, sigma2=1.0):
    """Real channel set with proper noise from complex channels ``(L, K, L, N_i, U, B)``."""
    U = H.shape[-2]
    C = np.broadcast_to(0.5 * sigma2 * np.eye(2 * U), H.shape[:2] + H.shape[3:4] + (2 * U, 2 * U))
    return RealChannelSet(H=real_decompose(H), C_noise=C.copy())


def random_complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_signal_covariance_examples(rng):
    P = rng.standard_normal((4, 4))
    P = P @ P.T
    assert not np.any(signal_covariance(np.eye(4), np.zeros((4, 4))))
    assert np.allclose(signal_covariance(np.eye(4), P), P)
    H = rng.standard_normal((4, 4))
    naive = np.array([[sum(H[a, c] * P[c, d] * H[b, d] for c in range(4) for d in range(4))
                       for b in range(4)] for a in range(4)])
    assert np.allclose(signal_covariance(H, P), naive)


def test_interference_single_user_is_noise(rng):
    real = real_set(random_complex(rng, (1, 1, 1, 2, 2, 2)), 0.3)
    P = random_covariances(rng, 1, 1, 2, 2, [1.0])
    assert np.array_equal(interference_covariance(real, P, 0, 0, 1), real.C_noise[0, 0, 1])
    real = real_set(random_complex(rng, (2, 2, 2, 1, 2, 2)))
    assert np.array_equal(interference_covariance(real, np.zeros((2, 2, 1, 4, 4)), 1, 0, 0), real.C_noise[1, 0, 0])


def test_interference_brute_force(rng):
    L, K, N_i = 2, 2, 2
    real = real_set(random_complex(rng, (L, K, L, N_i, 2, 2)), 0.5)
    P = random_covariances(rng, L, K, N_i, 2, [1.0, 2.0])
    br = rate_breakdown(real, P)
    for l, k, i in np.ndindex(L, K, N_i):
        D = real.C_noise[l, k, i].copy()
        for j in range(L):
            for m in range(K):
                if (j, m) != (l, k):
                    Hm = real.H[l, k, j, i]
                    D += Hm @ P[j, m, i] @ Hm.T
        assert np.allclose(interference_covariance(real, P, l, k, i), D)
        assert np.allclose(br.D[l, k, i], D)
        Ho = real.H[l, k, l, i]
        assert np.allclose(br.S[l, k, i], Ho @ P[l, k, i] @ Ho.T)


def test_zero_power_zero_rate(rng):
    real = real_set(random_complex(rng, (1, 2, 1, 2, 2, 2)))
    P = random_covariances(rng, 1, 2, 2, 2, [1.0])
    P[0, 1] = 0
    assert user_rate(real, P, 0, 1)[0] == 0.0


@settings(max_examples=40, deadline=None)
@given(h_re=st.floats(-3, 3), h_im=st.floats(-3, 3), p=st.floats(0, 10), s2=st.floats(0.01, 10))
def test_scalar_closed_form(h_re, h_im, p, s2):
    h = complex(h_re, h_im)
    real = real_set(np.array(h).reshape(1, 1, 1, 1, 1, 1), s2)
    P = (p / 2 * np.eye(2)).reshape(1, 1, 1, 2, 2)
    r, _ = user_rate(real, P, 0, 0)
    assert r == pytest.approx(np.log2(1 + p * abs(h) ** 2 / s2), rel=1e-12, abs=1e-12)


def test_mimo_proper_matches_complex(rng):
    for _ in range(20):
        H = random_complex(rng, (2, 2))
        A = random_complex(rng, (2, 2))
        Q = A @ A.conj().T
        real = real_set(H.reshape(1, 1, 1, 1, 2, 2), 0.7)
        P = proper_real_covariance(Q).reshape(1, 1, 1, 4, 4)
        assert user_rate(real, P, 0, 0)[0] == pytest.approx(complex_rate(H, Q, 0.7), abs=1e-10)


def test_interferer_lowers_rate(rng):
    real = real_set(random_complex(rng, (1, 2, 1, 1, 2, 2)))
    P = random_covariances(rng, 1, 2, 1, 2, [1.0])
    alone = P.copy()
    alone[0, 1] = 0
    assert user_rate(real, P, 0, 0)[0] < user_rate(real, alone, 0, 0)[0]


def test_vectorized_matches_per_user(rng):
    real = real_set(random_complex(rng, (2, 3, 2, 2, 2, 2)), 0.2)
    P = random_covariances(rng, 2, 3, 2, 2, [1.0, 3.0])
    br = rate_breakdown(real, P)
    for l, k in np.ndindex(2, 3):
        tot, per = user_rate(real, P, l, k)
        assert br.r_total[l, k] == pytest.approx(tot, rel=1e-12)
        assert np.allclose(br.r[l, k], per, rtol=1e-12)
    Y, Z = covariance_terms(real, P)
    assert Y.shape == (2, 3, 2, 2, 4, 4) and Z.shape == (2, 3, 3, 2, 4, 4)


def test_singular_noise_raises(rng):
    real = real_set(random_complex(rng, (1, 1, 1, 1, 2, 2)), 0.0)
    with pytest.raises(RateError, match=r"\(l, k, i\) = \(0, 0, 0\)"):
        user_rate(real, np.zeros((1, 1, 1, 4, 4)), 0, 0)


def test_energy_efficiency_examples(rng):
    pm = PowerModel(p_c=2.0, eta=3.0)
    P = np.zeros((1, 1, 1, 2, 2))
    assert user_ee(np.array([[0.0]]), P, pm, 0, 0) == 0.0
    P = (0.5 * np.eye(2)).reshape(1, 1, 1, 2, 2)
    assert user_ee(np.array([[4.0]]), P, pm, 0, 0) == pytest.approx(4.0 / (2.0 + 3.0 * 1.0))
    assert user_ee(np.array([[4.0]]), P, PowerModel(1.0, 1e12), 0, 0) < 1e-11
    assert user_power(P)[0, 0] == pytest.approx(1.0)


def test_global_ee_examples(rng):
    pm = PowerModel(p_c=1.5, eta=2.0)
    assert global_ee(np.zeros((1, 2)), np.zeros((1, 2, 1, 2, 2)), pm) == 0.0
    P = random_covariances(rng, 1, 1, 2, 2, [1.0])
    r = np.array([[3.0]])
    assert global_ee(r, P, pm) * (pm.p_c + pm.eta * np.trace(P, axis1=-2, axis2=-1).sum()) == pytest.approx(3.0)
    P = random_covariances(rng, 1, 2, 2, 2, [1.0])
    r = np.array([[1.0, 2.5]])
    total = sum(np.trace(P[0, k, i]) for k in range(2) for i in range(2))
    assert global_ee(r, P, pm) == pytest.approx(3.5 / (2 * 1.5 + 2.0 * total))


def test_utilities():
    rates = np.array([[2.0, 3.0, 5.0]])
    assert utility_eval(UtilitySpec("minrate"), rates) == 2.0
    assert utility_eval(UtilitySpec("sumrate"), rates) == 10.0
    ees = np.array([[0.3, 0.1, 0.2]])
    assert utility_eval(UtilitySpec("minee"), rates, ees) == pytest.approx(0.1)
    assert utility_eval(UtilitySpec("minee", np.array([[1.0, 4.0, 1.0]])), rates, ees) == pytest.approx(0.2)
    assert utility_eval(UtilitySpec("gee"), rates, ees, 0.7) == 0.7
    with pytest.raises(ValueError):
        UtilitySpec("maxrate")


def test_evaluate_consistent(rng):
    real = real_set(random_complex(rng, (1, 2, 1, 2, 2, 2)))
    P = random_covariances(rng, 1, 2, 2, 2, [1.0])
    u, br, ees, gee = evaluate(UtilitySpec("sumrate"), real, P, PowerModel())
    assert u == pytest.approx(br.r_total.sum())
