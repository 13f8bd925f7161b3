"""Independent numerical oracles for the simulator.

Each check returns a :class:`CheckResult`.  The oracles deliberately avoid
the code paths they test: the multiplier grid search uses direct linear
solves instead of the eigenbasis solver, and the Monte-Carlo checks sample
the physical received signal instead of evaluating closed forms.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .channel import CsiModel, complex_normal, draw_channel
from .clustering import analytic_psi, in_cluster_mask, ocl_mask
from .harness import PRECODERS, Scenario, prepare_trial, solve_all, trial_rng
from .metrics import decompose_power
from .precoding import PrecoderConfig, objective_ji, rmmse_oclis, stationarity_residuals

__all__ = [
    "CheckResult",
    "check_power",
    "check_stationarity",
    "lambda_grid_oracle",
    "check_lambda_grid",
    "psi_monte_carlo",
    "check_psi",
    "received_power_monte_carlo",
    "check_decomposition",
    "run_battery",
]

# stream ids private to the verification battery
_VERIFY_STREAM = 7


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def _small(scn: Scenario, M: int, K: int, C: int, seed_offset: int) -> Scenario:
    return dataclasses.replace(scn, num_aps=M, num_users=K, num_clusters=C,
                               master_seed=(scn.master_seed + seed_offset) % 2**64,
                               redraw_geometry_per_trial=True)


def _iter_setups(scn: Scenario, count: int):
    """Trial setups cycling over the SNR grid."""
    n_snr = len(scn.snr_grid_db)
    for i in range(count):
        yield prepare_trial(scn, i % n_snr, i // n_snr)


def check_power(scn: Scenario, num_solves: int = 1000, tol: float = 1e-9) -> CheckResult:
    """Every precoder spends exactly the power budget."""
    worst, done = 0.0, 0
    for setup in _iter_setups(scn, math.ceil(num_solves / len(PRECODERS))):
        for sol in solve_all(scn, setup).values():
            if sol is None or done >= num_solves:
                continue
            worst = max(worst, abs(sol.power - setup.total_power) / setup.total_power)
            done += 1
    return CheckResult("power", worst <= tol and done == num_solves,
                       f"{done} solves, max |tr(PP^H)-Pt|/Pt = {worst:.2e} (tol {tol:g})")


def check_stationarity(scn: Scenario, num_solves: int = 200, tol: float = 1e-6,
                       max_attempts: int | None = None) -> CheckResult:
    """First-order conditions at converged robust solutions."""
    max_attempts = max_attempts or 2 * num_solves
    worst_p = worst_f = 0.0
    conv = tried = 0
    for setup in _iter_setups(scn, max_attempts):
        if conv >= num_solves:
            break
        cfg = dataclasses.replace(scn.precoder, total_power=setup.total_power)
        parts = setup.parts
        sol = rmmse_oclis(parts.g_hat_eff, parts.psi, setup.tau, setup.sigma_n_sq, cfg)
        tried += 1
        if not sol.converged:
            continue
        conv += 1
        rp, rf = stationarity_residuals(sol, parts.g_hat_eff, parts.psi, setup.tau, setup.sigma_n_sq)
        worst_p, worst_f = max(worst_p, rp), max(worst_f, rf)
    ok = conv >= num_solves and worst_p <= tol and worst_f <= tol
    return CheckResult("stationarity", ok,
                       f"{conv}/{tried} converged, max P-residual {worst_p:.2e}, "
                       f"max f-residual {worst_f:.2e} (tol {tol:g})")


def lambda_grid_oracle(g_hat, psi, tau, sigma_n_sq, total_power, lam_ref: float,
                       num_lambda: int = 200, lam_decades: float = 4.0,
                       num_f: int = 400, f_decades: float = 4.0) -> float:
    """Smallest objective over feasible points indexed by a positive multiplier grid.

    For each multiplier on a log grid the precoder family
    ``P(f) = f tau (G G^H + f^2 Psi + lam f^2 tau^2 I)^{-1} G`` is scanned over
    ``f`` and every root of ``||P(f)||^2 = Pt`` is located by bracketing.
    """
    M, K = g_hat.shape
    GG = g_hat @ g_hat.conj().T
    eye = np.eye(M)
    f_ref = math.sqrt(total_power) / np.linalg.norm(np.linalg.pinv(g_hat.conj().T)) / tau
    f_grid = f_ref * np.logspace(-f_decades, f_decades, num_f)
    best = math.inf

    def prec(lam, f):
        return f * tau * np.linalg.solve(GG + f**2 * psi + lam * f**2 * tau**2 * eye, g_hat)

    for lam in lam_ref * np.logspace(-lam_decades, lam_decades, num_lambda):
        def excess(f):
            p = prec(lam, f)
            return math.log(float(np.vdot(p, p).real) / total_power)

        vals = np.array([excess(f) for f in f_grid])
        for j in np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:])):
            f = brentq(excess, f_grid[j], f_grid[j + 1], xtol=1e-14 * f_grid[j], rtol=1e-15)
            p = prec(lam, f)
            p *= math.sqrt(total_power / float(np.vdot(p, p).real))
            best = min(best, objective_ji(p, f, g_hat, psi, tau, sigma_n_sq))
    return best


def check_lambda_grid(scn: Scenario, num_instances: int = 50, tol: float = 1e-6,
                      num_lambda: int = 200) -> CheckResult:
    """The solver is at least as good as a brute-force multiplier search."""
    worst = -math.inf
    n = 0
    for i in range(num_instances):
        M, K = (3, 2) if i % 2 == 0 else (4, 2)
        small = _small(scn, M, K, 2, 1000 + i)
        setup = prepare_trial(small, i % len(scn.snr_grid_db), 0)
        parts = setup.parts
        cfg = dataclasses.replace(scn.precoder, total_power=setup.total_power)
        sol = rmmse_oclis(parts.g_hat_eff, parts.psi, setup.tau, setup.sigma_n_sq, cfg)
        lam0 = K * setup.sigma_n_sq / setup.total_power
        grid = lambda_grid_oracle(parts.g_hat_eff, parts.psi, setup.tau, setup.sigma_n_sq,
                                  setup.total_power, lam0, num_lambda=num_lambda)
        worst = max(worst, sol.objective - grid)
        n += 1
    return CheckResult("lambda-grid", worst <= tol,
                       f"{n} instances, max (J_solver - J_grid) = {worst:.2e} (tol {tol:g})")


def psi_monte_carlo(zeta, plan, csi: CsiModel, num_draws: int, rng, batch: int = 20000):
    """Sample mean and standard error of ``G_o G_o^H`` from full channel draws."""
    mask = ocl_mask(plan)
    M, K = zeta.shape
    s1 = np.zeros((M, M), dtype=complex)
    s2 = np.zeros((M, M), dtype=complex)
    done = 0
    while done < num_draws:
        n = min(batch, num_draws - done)
        ch = draw_channel(np.broadcast_to(zeta, (n, M, K)), csi, rng)
        go = np.where(mask, ch.g_true, 0.0)
        outer = go @ np.conj(np.swapaxes(go, 1, 2))
        s1 += outer.sum(axis=0)
        s2 += (outer.real**2).sum(axis=0) + 1j * (outer.imag**2).sum(axis=0)
        done += n
    mean = s1 / num_draws
    var = (s2.real / num_draws - mean.real**2) + 1j * (s2.imag / num_draws - mean.imag**2)
    var *= num_draws / (num_draws - 1)
    se = np.sqrt(np.maximum(var.real, 0.0) / num_draws) + 1j * np.sqrt(np.maximum(var.imag, 0.0) / num_draws)
    return mean, se


def _within(diff, se, k):
    # entries with zero spread must match exactly
    return np.abs(diff) <= k * se + 1e-12 * (se == 0)


def check_psi(scn: Scenario, num_scenarios: int = 10, num_draws: int = 100_000,
              k_se: float = 3.0, use_given: bool = False) -> CheckResult:
    """Analytic OCL covariance against its Monte-Carlo estimate.

    With ``use_given`` the scenario itself is used (one instance); otherwise
    small variants with 4 to 6 APs and 2 to 4 users are generated.
    """
    rng = trial_rng(scn.master_seed, _VERIFY_STREAM, 1)
    bad = total = 0
    worst = 0.0
    zero_psi = True
    for i in range(num_scenarios):
        if use_given:
            small = scn
        else:
            M, K = 4 + i % 3, 2 + i % 3
            small = _small(scn, M, K, 2, 2000 + i)
        setup = prepare_trial(small, 0, i if use_given else 0)
        psi = analytic_psi(setup.lsc, setup.plan)
        zero_psi &= not np.any(psi)
        mean, se = psi_monte_carlo(setup.lsc.zeta, setup.plan, small.csi, num_draws, rng)
        d = mean - psi
        ok = _within(d.real, se.real, k_se) & _within(d.imag, se.imag, k_se)
        bad += int(np.sum(~ok))
        total += ok.size
        with np.errstate(divide="ignore", invalid="ignore"):
            zr = np.where(se.real > 0, np.abs(d.real) / se.real, 0.0)
            zi = np.where(se.imag > 0, np.abs(d.imag) / se.imag, 0.0)
        worst = max(worst, float(zr.max()), float(zi.max()))
    detail = f"{total} entries, {bad} outside {k_se:g} SE, max |z| = {worst:.2f}"
    if zero_psi:
        detail += ", psi = 0 identically"
    return CheckResult("psi-monte-carlo", bad == 0, detail)


def received_power_monte_carlo(setup, p, num_draws: int, rng, batch: int = 20000):
    """Mean and standard error of ``|y_k|^2`` for the physical received signal.

    The users see the true channel on every serving and selected interfering
    link; symbols are i.i.d. CN(0, 1) and the noise has power ``sigma_n_sq``.
    """
    used = in_cluster_mask(setup.plan) | ocl_mask(setup.plan)
    heff = np.where(used, setup.g_true, 0.0).conj().T @ p
    K = heff.shape[0]
    s1 = np.zeros(K)
    s2 = np.zeros(K)
    done = 0
    while done < num_draws:
        n = min(batch, num_draws - done)
        s = complex_normal((p.shape[1], n), rng)
        noise = complex_normal((K, n), rng) * math.sqrt(setup.sigma_n_sq)
        y2 = np.abs(heff @ s + noise) ** 2
        s1 += y2.sum(axis=1)
        s2 += (y2**2).sum(axis=1)
        done += n
    mean = s1 / num_draws
    var = (s2 / num_draws - mean**2) * num_draws / (num_draws - 1)
    return mean, np.sqrt(np.maximum(var, 0.0) / num_draws)


def check_decomposition(scn: Scenario, num_instances: int = 10, num_draws: int = 100_000,
                        k_se: float = 3.0, precoder: str = "RMMSE-OCLIS") -> CheckResult:
    """Received-power split against a Monte-Carlo of the received sample."""
    rng = trial_rng(scn.master_seed, _VERIFY_STREAM, 2)
    bad = total = 0
    worst = 0.0
    for setup in _iter_setups(scn, num_instances):
        sol = solve_all(scn, setup)[precoder]
        parts = setup.parts
        g_ocl = parts.g_ocl_hat + parts.g_ocl_tilde
        terms = decompose_power(parts.g_hat_eff, parts.g_tilde_eff, g_ocl, sol.p,
                                setup.tau, setup.sigma_n_sq, "exact")
        mean, se = received_power_monte_carlo(setup, sol.p, num_draws, rng)
        z = np.abs(mean - terms.total) / se
        bad += int(np.sum(z > k_se))
        total += len(z)
        worst = max(worst, float(z.max()))
    return CheckResult("sinr-decomposition", bad == 0,
                       f"{total} users, {bad} outside {k_se:g} SE, max |z| = {worst:.2f}")


def run_battery(scn: Scenario, quick: bool = False) -> list[CheckResult]:
    """All checks, sized for a release gate (or a fast smoke run)."""
    if quick:
        return [
            check_power(scn, 40),
            check_stationarity(scn, 10),
            check_lambda_grid(scn, 4, num_lambda=60),
            check_psi(scn, 3, 20_000),
            check_decomposition(scn, 3, 20_000),
        ]
    return [
        check_power(scn, 1000),
        check_stationarity(scn, 200),
        check_lambda_grid(scn, 50),
        check_psi(scn, 10, 100_000),
        check_decomposition(scn, 10, 100_000),
    ]
