import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cellfree_rmmse.channel import complex_normal
from cellfree_rmmse.precoding import (NonHermitianResidue, PrecoderConfig, SingularSystem,
                                      lagrangian, lagrangian_gradient, mmse_conventional,
                                      mmse_network_wide, objective_ji, precoder_at_scaling,
                                      rmmse_oclis, rmmse_poclis, stationarity_residuals)

from conftest import random_instance

TAU = math.sqrt(1.01)


def test_objective_zero_precoder():
    G = np.ones((3, 2), complex)
    J = objective_ji(np.zeros((3, 2), complex), 2.0, G, np.eye(3), TAU, 0.3)
    assert J == pytest.approx(2 + 2 * 0.3 / 4, rel=1e-15)


def test_objective_reduces_to_standard_mse(rng):
    G, _ = random_instance(rng, 4, 2, masked=False)
    P = complex_normal((4, 2), rng)
    f, s2 = 1.7, 0.2
    GhP = G.conj().T @ P
    standard = (2 - 2 * np.trace(GhP).real / f + np.linalg.norm(GhP) ** 2 / f**2 + 2 * s2 / f**2)
    assert objective_ji(P, f, G, np.zeros((4, 4)), 1.0, s2) == pytest.approx(standard, rel=1e-13)


def test_objective_monte_carlo_oracle(rng):
    M, K, n = 4, 2, 100_000
    G, psi = random_instance(rng, M, K, masked=False)
    P = complex_normal((M, K), rng)
    f, s2 = 1.3, 0.4
    J = objective_ji(P, f, G, psi, TAU, s2)
    s = complex_normal((K, n), rng)
    noise = complex_normal((K, n), rng) * math.sqrt(s2)
    go = np.sqrt(np.diag(psi))[:, None, None] * complex_normal((M, 1, n), rng)
    y = (G.conj().T @ P @ s) / TAU + noise
    mse = np.sum(np.abs(s - y / f) ** 2, axis=0)
    # one out-of-cluster column per draw carries covariance psi
    leak = np.abs(np.einsum("mn,mk,kn->n", go[:, 0, :].conj(), P, s)) ** 2 / TAU**2
    x = mse + leak
    assert abs(x.mean() - J) <= 3 * x.std(ddof=1) / math.sqrt(n)


def test_objective_flags_non_hermitian_psi(rng):
    G, _ = random_instance(rng, 3, 2, masked=False)
    P = complex_normal((3, 2), rng)
    psi = np.eye(3, dtype=complex)
    psi[0, 1] = 5j
    with pytest.raises(NonHermitianResidue):
        objective_ji(P, 1.0, G, psi, TAU, 0.1)


def test_gradient_finite_difference(rng):
    for _ in range(5):
        G, psi = random_instance(rng, 4, 2, masked=False)
        P = complex_normal((4, 2), rng)
        f, lam, s2, Pt = 1.1, 0.3, 0.2, 1.0
        grad = lagrangian_gradient(P, f, lam, G, psi, TAU)
        h = 1e-6
        num = np.zeros_like(P)
        for idx in np.ndindex(P.shape):
            E = np.zeros_like(P)
            E[idx] = h
            dre = (lagrangian(P + E, f, lam, G, psi, TAU, s2, Pt)
                   - lagrangian(P - E, f, lam, G, psi, TAU, s2, Pt)) / (2 * h)
            dim = (lagrangian(P + 1j * E, f, lam, G, psi, TAU, s2, Pt)
                   - lagrangian(P - 1j * E, f, lam, G, psi, TAU, s2, Pt)) / (2 * h)
            num[idx] = 0.5 * (dre + 1j * dim)
        assert np.linalg.norm(num - grad) <= 1e-4 * np.linalg.norm(grad)


def test_zero_psi_gives_closed_form_mmse(rng):
    G, _ = random_instance(rng, 6, 3)
    s2, Pt = 0.05, 2.0
    cfg = PrecoderConfig(total_power=Pt)
    sol = rmmse_oclis(G, np.zeros((6, 6)), TAU, s2, cfg)
    pbar = np.linalg.solve(G @ G.conj().T + (3 * s2 / Pt) * TAU**2 * np.eye(6), G)
    f = math.sqrt(Pt / np.linalg.norm(pbar) ** 2) / TAU
    np.testing.assert_allclose(sol.p, f * TAU * pbar, rtol=1e-10, atol=1e-12)
    assert sol.f == pytest.approx(f, rel=1e-12)
    # the multiplier enters the normal matrix as lam * f^2
    assert sol.lambda_ * sol.f**2 == pytest.approx(3 * s2 / Pt, rel=1e-12)
    assert sol.iterations == 1 and sol.converged
    ref = mmse_conventional(G, TAU, s2, cfg)
    np.testing.assert_array_equal(sol.p, ref.p)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 8), st.integers(1, 4), st.floats(-2.0, 1.0))
def test_robust_solution_properties(seed, M, K, log_s2):
    rng = np.random.default_rng(seed)
    K = min(K, M)
    G, psi = random_instance(rng, M, K)
    s2 = 10.0**log_s2
    cfg = PrecoderConfig(total_power=1.0)
    sol = rmmse_oclis(G, psi, TAU, s2, cfg)
    assert abs(sol.power - 1.0) <= 1e-9
    assert sol.f > 0
    if sol.converged:
        rp, rf = stationarity_residuals(sol, G, psi, TAU, s2)
        assert rp <= 1e-6 and rf <= 1e-6
    best = np.minimum.accumulate([t[1] for t in sol.trace])
    assert np.all(np.diff(best) <= 0)
    assert sol.objective <= best[-1] + 1e-12 * abs(best[-1])
    # never worse than the MMSE starting point
    assert sol.objective <= sol.trace[0][1] + 1e-12 * abs(sol.trace[0][1])


def test_solution_is_local_minimum_along_f(rng):
    G, psi = random_instance(rng, 6, 3)
    cfg = PrecoderConfig()
    s2 = 0.05
    sol = rmmse_oclis(G, psi, TAU, s2, cfg)
    p0, _, J0 = precoder_at_scaling(G, psi, TAU, s2, sol.f, cfg)
    assert J0 == pytest.approx(sol.objective, rel=1e-10)
    # re-solving for P on the power sphere at a nearby f cannot lower J
    for fac in (0.9, 0.99, 0.999, 1.001, 1.01, 1.1):
        P, _, J = precoder_at_scaling(G, psi, TAU, s2, sol.f * fac, cfg)
        assert abs(np.linalg.norm(P) ** 2 - cfg.total_power) <= 1e-9
        assert J >= sol.objective - 1e-12


def test_hard_case_zero_row(rng):
    # an AP with no served user and a strong interference weight
    G, psi = random_instance(rng, 5, 2)
    G[4] = 0
    psi[4, 4] = 1e-3
    sol = rmmse_oclis(G, psi, TAU, 0.01, PrecoderConfig())
    assert abs(sol.power - 1.0) <= 1e-9
    rp, rf = stationarity_residuals(sol, G, psi, TAU, 0.01)
    assert rp <= 1e-6


def test_zf_limit(rng):
    G, _ = random_instance(rng, 6, 3, masked=False)
    off = []
    for s2 in (1e-1, 1e-2, 1e-3, 1e-4):
        sol = mmse_conventional(G, 1.0, s2, PrecoderConfig())
        A = G.conj().T @ sol.p
        off.append(np.linalg.norm(A - np.diag(np.diag(A))) / np.linalg.norm(A))
    assert all(b < a for a, b in zip(off, off[1:]))


def test_scalar_case():
    G = np.array([[0.3 - 0.4j]])
    sol = mmse_conventional(G, 1.0, 0.1, PrecoderConfig(total_power=2.5))
    assert abs(sol.p[0, 0]) == pytest.approx(math.sqrt(2.5), rel=1e-12)


def test_poclis_with_zero_ocl_equals_oclis(rng):
    G, _ = random_instance(rng, 6, 3)
    cfg = PrecoderConfig()
    a = rmmse_poclis(G, np.zeros_like(G), TAU, 0.1, cfg)
    b = rmmse_oclis(G, np.zeros((6, 6)), TAU, 0.1, cfg)
    np.testing.assert_array_equal(a.p, b.p)


def test_network_wide_equals_conventional_when_unmasked(rng):
    G, _ = random_instance(rng, 5, 3, masked=False)
    cfg = PrecoderConfig()
    np.testing.assert_array_equal(mmse_network_wide(G, TAU, 0.1, cfg).p,
                                  mmse_conventional(G, TAU, 0.1, cfg).p)


def test_singular_inputs():
    cfg = PrecoderConfig()
    with pytest.raises(SingularSystem):
        mmse_conventional(np.zeros((3, 2), complex), 1.0, 0.1, cfg)
    G = np.ones((3, 2), complex)
    G[0, 0] = np.nan
    with pytest.raises(SingularSystem):
        rmmse_oclis(G, np.eye(3), 1.0, 0.1, cfg)


def test_config_validation():
    with pytest.raises(ValueError):
        PrecoderConfig(total_power=0)
    with pytest.raises(ValueError):
        PrecoderConfig(max_ao_iters=0)
    with pytest.raises(ValueError):
        PrecoderConfig(ao_tol=0)
    with pytest.raises(ValueError):
        PrecoderConfig(ridge_floor=-1)


def test_power_exact_all_precoders(rng):
    cfg = PrecoderConfig(total_power=3.0)
    for _ in range(20):
        G, psi = random_instance(rng, 6, 3)
        Go = rng.standard_normal((6, 3)) * (G == 0)
        for sol in (rmmse_oclis(G, psi, TAU, 0.05, cfg), rmmse_poclis(G, Go, TAU, 0.05, cfg),
                    mmse_conventional(G, TAU, 0.05, cfg), mmse_network_wide(G + Go, TAU, 0.05, cfg)):
            assert abs(sol.power - 3.0) / 3.0 <= 1e-9
