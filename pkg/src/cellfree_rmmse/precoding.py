"""MMSE-type downlink precoders under a total transmit-power constraint.

The robust objective is

    J(P, f) = K - (2/(f tau)) Re tr(G^H P) + K s2 / f^2
              + ||G^H P||_F^2 / (f tau)^2 + tr(P^H Psi P) / tau^2,

with ``G`` the (masked) channel estimate, ``Psi`` the covariance of the
out-of-cluster channel, ``s2`` the noise power and ``f`` the receive scaling.
It is minimised subject to ``tr(P P^H) = Pt`` by alternating over ``P`` and
``f``:

* for a fixed ``f`` the minimiser is ``P = f tau (G G^H + f^2 Psi + f^2 tau^2 lam I)^{-1} G``
  with the multiplier ``lam`` chosen so that the power constraint holds.  This
  is solved exactly on an eigenbasis of ``G G^H + f^2 Psi`` (``lam`` may be
  negative).
* for a fixed ``P`` the stationary ``f`` is available in closed form.

The outer search runs a coarse log-scan over ``f`` followed by a bracketed root
search of the ``f``-stationarity equation, which is far faster and more
reliable than plain alternation on badly conditioned instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import brentq

__all__ = [
    "SingularSystem",
    "NonHermitianResidue",
    "PrecoderConfig",
    "PrecoderSolution",
    "objective_ji",
    "lagrangian",
    "lagrangian_gradient",
    "stationarity_residuals",
    "precoder_at_scaling",
    "solve_robust",
    "rmmse_oclis",
    "rmmse_poclis",
    "mmse_conventional",
    "mmse_network_wide",
]


class SingularSystem(np.linalg.LinAlgError):
    """The regularised normal matrix could not be factorised."""


class NonHermitianResidue(ArithmeticError):
    """A trace that must be real picked up a sizeable imaginary part."""


@dataclass(frozen=True)
class PrecoderConfig:
    """Solver settings.

    Parameters
    ----------
    total_power : float
        Target ``tr(P P^H)``.
    max_ao_iters : int
        Iteration cap for the root search over ``f`` (and for the plain
        alternating fallback).
    ao_tol : float
        Relative residual of the ``f``-stationarity equation below which a
        solution is flagged converged.
    ridge_floor : float or None
        Smallest eigenvalue allowed for the regularised normal matrix.  ``None``
        means ``1e-12 tr(G G^H) / M``.
    scan_decades : float
        Half-width, in decades around the MMSE scaling, of the initial scan.
    scan_points : int
        Number of points in that scan.
    """

    total_power: float = 1.0
    max_ao_iters: int = 100
    ao_tol: float = 1e-8
    ridge_floor: float | None = None
    scan_decades: float = 2.0
    scan_points: int = 17

    def __post_init__(self):
        if not self.total_power > 0:
            raise ValueError("total_power must be positive")
        if self.max_ao_iters < 1:
            raise ValueError("max_ao_iters must be at least 1")
        if not self.ao_tol > 0:
            raise ValueError("ao_tol must be positive")
        if self.ridge_floor is not None and self.ridge_floor < 0:
            raise ValueError("ridge_floor must be nonnegative")
        if self.scan_points < 3 or not self.scan_decades > 0:
            raise ValueError("scan needs at least 3 points over a positive range")


@dataclass
class PrecoderSolution:
    p: np.ndarray
    f: float
    lambda_: float
    objective: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)
    ridge_repaired: bool = False
    label: str = ""

    @property
    def power(self) -> float:
        return float(np.vdot(self.p, self.p).real)


def _real(value: complex, what: str, tol: float = 1e-9) -> float:
    if abs(value.imag) > tol * max(1.0, abs(value)):
        raise NonHermitianResidue(f"{what} has imaginary part {value.imag:.3e}")
    return float(value.real)


def objective_ji(p, f, g_hat, psi, tau, sigma_n_sq, K=None) -> float:
    """Robust MSE objective ``J`` for precoder ``p`` and scaling ``f``."""
    if not f > 0:
        raise ValueError("f must be positive")
    K = g_hat.shape[1] if K is None else K
    GhP = g_hat.conj().T @ p
    t_cross = np.trace(p.conj().T @ g_hat) + np.trace(GhP)
    t_mui = np.trace(p @ p.conj().T @ g_hat @ g_hat.conj().T)
    t_ocl = np.trace(psi @ p @ p.conj().T) if np.any(psi) else 0j
    cross = _real(t_cross, "tr(P^H G) + tr(G^H P)")
    mui = _real(t_mui, "tr(P P^H G G^H)")
    ocl = _real(t_ocl, "tr(Psi P P^H)")
    return (K - cross / (f * tau) + K * sigma_n_sq / f**2
            + mui / (f * tau) ** 2 + ocl / tau**2)


def lagrangian(p, f, lam, g_hat, psi, tau, sigma_n_sq, total_power) -> float:
    power = float(np.vdot(p, p).real)
    return objective_ji(p, f, g_hat, psi, tau, sigma_n_sq) + lam * (power - total_power)


def lagrangian_gradient(p, f, lam, g_hat, psi, tau) -> np.ndarray:
    """Wirtinger derivative of the Lagrangian with respect to ``conj(P)``."""
    return (-g_hat / (f * tau) + g_hat @ (g_hat.conj().T @ p) / (f * tau) ** 2
            + psi @ p / tau**2 + lam * p)


def stationarity_residuals(sol_or_p, g_hat, psi, tau, sigma_n_sq, f=None, lam=None):
    """Relative residuals of the two first-order conditions.

    Returns
    -------
    res_p : float
        ``||f tau G - (G G^H + f^2 Psi + f^2 tau^2 lam I) P||_F / ||f tau G||_F``.
    res_f : float
        ``|f tau Re tr(G P^H) - ||G^H P||^2 - tau^2 K s2| / (tau^2 K s2)``.
    """
    if isinstance(sol_or_p, PrecoderSolution):
        p, f, lam = sol_or_p.p, sol_or_p.f, sol_or_p.lambda_
    else:
        p = sol_or_p
    M, K = g_hat.shape
    lhs = f * tau * g_hat
    rhs = g_hat @ (g_hat.conj().T @ p) + f**2 * (psi @ p) + f**2 * tau**2 * lam * p
    res_p = np.linalg.norm(lhs - rhs) / np.linalg.norm(lhs)
    noise = tau**2 * K * sigma_n_sq
    cross = np.real(np.vdot(p, g_hat))
    res_f = abs(f * tau * cross - np.linalg.norm(g_hat.conj().T @ p) ** 2 - noise) / noise
    return float(res_p), float(res_f)


def _check_inputs(g_hat, psi, sigma_n_sq):
    if not np.all(np.isfinite(g_hat)) or not np.any(g_hat):
        raise SingularSystem("channel estimate is zero or not finite")
    if psi is not None and not np.all(np.isfinite(psi)):
        raise SingularSystem("psi is not finite")
    if not sigma_n_sq > 0:
        raise ValueError("sigma_n_sq must be positive")


def _ridge(g_hat, cfg: PrecoderConfig) -> float:
    if cfg.ridge_floor is not None:
        return cfg.ridge_floor
    return 1e-12 * float(np.vdot(g_hat, g_hat).real) / g_hat.shape[0]


def _mmse(g_hat, tau, sigma_n_sq, cfg: PrecoderConfig):
    """Closed-form robust MMSE precoder, returned as (P, f, lam)."""
    M, K = g_hat.shape
    Pt = cfg.total_power
    mu = K * sigma_n_sq / Pt
    A = g_hat @ g_hat.conj().T + mu * tau**2 * np.eye(M)
    try:
        pbar = cho_solve(cho_factor(A, lower=True), g_hat)
    except LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    f = math.sqrt(Pt / float(np.vdot(pbar, pbar).real)) / tau
    p = f * tau * pbar
    return p, f, K * sigma_n_sq / (f**2 * Pt)


class _PStep:
    """Exact minimiser of J over the power sphere for a fixed ``f``."""

    def __init__(self, g_hat, psi, tau, total_power, ridge):
        self.G = g_hat
        self.GG = g_hat @ g_hat.conj().T
        self.psi = psi
        self.tau = tau
        self.Pt = total_power
        self.ridge = ridge

    def __call__(self, f: float):
        A = self.GG + f**2 * self.psi
        d, V = np.linalg.eigh(A)
        if not np.all(np.isfinite(d)):
            raise SingularSystem("eigendecomposition failed")
        W = V.conj().T @ self.G
        c = np.sum(np.abs(W) ** 2, axis=1)
        a = f**2 * self.tau**2
        Pt = self.Pt
        # work with the shift mu = a*lam + d_min so the smallest denominator is exact
        e = d - d[0]

        def power(mu):
            return a * np.sum(c / (e + mu) ** 2)

        lo = self.ridge
        repaired = power(lo) <= Pt
        if repaired:
            # hard case: the cheapest eigendirection carries no channel energy,
            # so the remaining power is placed along it at no cost in J
            mu = lo
        else:
            hi = lo + math.sqrt(a * c.sum() / Pt)
            while power(hi) >= Pt:
                hi = lo + 2.0 * (hi - lo)
            mu = brentq(lambda x: math.log(power(x) / Pt), lo, hi, xtol=1e-300, rtol=1e-15)
        lam = (mu - d[0]) / a
        denom = e + mu
        if repaired:
            keep = denom > 2.0 * self.ridge
            p = f * self.tau * (V[:, keep] @ (W[keep] / denom[keep, None]))
            spare = max(Pt - float(np.vdot(p, p).real), 0.0)
            p = p + V[:, [0]] * math.sqrt(spare / p.shape[1])
        else:
            p = f * self.tau * (V @ (W / denom[:, None]))
        p *= math.sqrt(Pt / float(np.vdot(p, p).real))
        return p, float(lam), repaired


def precoder_at_scaling(g_hat, psi, tau, sigma_n_sq, f, cfg: PrecoderConfig | None = None):
    """Best precoder on the power sphere for a fixed receive scaling ``f``.

    Returns ``(P, lam, J)``.  Minimising this ``J`` over ``f`` alone gives the
    joint optimum, which is how :func:`solve_robust` proceeds.
    """
    cfg = cfg or PrecoderConfig()
    g_hat = np.asarray(g_hat, dtype=complex)
    psi = np.asarray(psi)
    p, lam, _ = _PStep(g_hat, psi, tau, cfg.total_power, _ridge(g_hat, cfg))(float(f))
    return p, lam, objective_ji(p, f, g_hat, psi, tau, sigma_n_sq)


def _f_update(p, g_hat, tau, sigma_n_sq) -> float:
    """Stationary ``f`` for a fixed ``P``."""
    K = g_hat.shape[1]
    cross = float(np.real(np.vdot(p, g_hat)))
    if cross <= 0:
        return math.inf
    return (np.linalg.norm(g_hat.conj().T @ p) ** 2 + tau**2 * K * sigma_n_sq) / (tau * cross)


def solve_robust(g_hat, psi, tau, sigma_n_sq, cfg: PrecoderConfig, label: str = "") -> PrecoderSolution:
    """Minimise the robust objective for a general PSD ``psi``.

    Parameters
    ----------
    g_hat : ndarray, complex (M, K)
        Channel estimate seen by the precoder.
    psi : ndarray (M, M) or None
        Hermitian PSD interference covariance.  ``None`` or all-zero gives the
        closed-form MMSE precoder.
    tau : float
        CSI normalisation.
    sigma_n_sq : float
        Receiver noise power.
    cfg : PrecoderConfig

    Returns
    -------
    PrecoderSolution
    """
    g_hat = np.asarray(g_hat, dtype=complex)
    M, K = g_hat.shape
    _check_inputs(g_hat, psi, sigma_n_sq)
    zero_psi = np.zeros((M, M))
    psi = zero_psi if psi is None else np.asarray(psi)

    p0, f0, lam0 = _mmse(g_hat, tau, sigma_n_sq, cfg)
    J0 = objective_ji(p0, f0, g_hat, psi, tau, sigma_n_sq)
    if not np.any(psi):
        sol = PrecoderSolution(p0, f0, lam0, J0, 1, True, [(0, J0, lam0, f0)], label=label)
        sol.converged = stationarity_residuals(sol, g_hat, psi, tau, sigma_n_sq)[1] <= max(cfg.ao_tol, 1e-9)
        return sol

    pstep = _PStep(g_hat, psi, tau, cfg.total_power, _ridge(g_hat, cfg))
    trace = [(0, J0, lam0, f0)]
    evals: dict[float, tuple] = {}

    def evaluate(f):
        if f not in evals:
            p, lam, rep = pstep(f)
            J = objective_ji(p, f, g_hat, psi, tau, sigma_n_sq)
            evals[f] = (J, p, lam, rep)
            trace.append((len(trace), J, lam, f))
        return evals[f]

    def excess(f):
        return _f_update(evaluate(f)[1], g_hat, tau, sigma_n_sq) - f

    root = None
    lo_dec, hi_dec = -cfg.scan_decades, cfg.scan_decades
    grid = f0 * np.logspace(lo_dec, hi_dec, cfg.scan_points)
    for _ in range(4):
        e = np.array([excess(f) for f in grid])
        Js = np.array([evals[f][0] for f in grid])
        i = int(np.argmin(Js))
        # excess > 0 means J still decreases with f
        if e[i] > 0 and i + 1 < len(grid):
            a, b = grid[i], grid[i + 1]
        elif e[i] <= 0 and i > 0:
            a, b = grid[i - 1], grid[i]
        else:
            # minimum sits at the scan edge: recentre on it and rescan
            width = hi_dec - lo_dec
            centre = math.log10(grid[i] / f0)
            lo_dec, hi_dec = centre - width / 2, centre + width / 2
            grid = f0 * np.logspace(lo_dec, hi_dec, cfg.scan_points)
            continue
        if np.sign(e[grid == a][0]) != np.sign(e[grid == b][0]):
            root = brentq(excess, a, b, xtol=1e-15 * a, rtol=1e-15,
                          maxiter=cfg.max_ao_iters, full_output=True, disp=False)[0]
        break

    if root is None:
        # plain alternation from the best point seen so far
        f = min(evals, key=lambda x: evals[x][0])
        for _ in range(cfg.max_ao_iters):
            f_new = _f_update(evals[f][1], g_hat, tau, sigma_n_sq)
            if not math.isfinite(f_new):
                break
            evaluate(f_new)
            if abs(f_new - f) <= 1e-15 * f:
                f = f_new
                break
            f = f_new
        root = f

    evaluate(root)
    best = min(evals, key=lambda x: evals[x][0])
    J_root = evals[root][0]
    f = root if J_root <= evals[best][0] + 1e-12 * abs(J_root) else best
    J, p, lam, rep = evals[f]
    sol = PrecoderSolution(p, float(f), lam, J, len(trace) - 1, False, trace, rep, label)
    sol.converged = stationarity_residuals(sol, g_hat, psi, tau, sigma_n_sq)[1] <= cfg.ao_tol
    return sol


def rmmse_oclis(g_hat_eff, psi, tau, sigma_n_sq, cfg: PrecoderConfig) -> PrecoderSolution:
    """Robust precoder using the statistical out-of-cluster covariance."""
    return solve_robust(g_hat_eff, psi, tau, sigma_n_sq, cfg, label="RMMSE-OCLIS")


def rmmse_poclis(g_hat_eff, g_ocl_hat, tau, sigma_n_sq, cfg: PrecoderConfig) -> PrecoderSolution:
    """Robust precoder using the realised out-of-cluster channel estimate."""
    g_ocl_hat = np.asarray(g_ocl_hat)
    psi_inst = g_ocl_hat @ g_ocl_hat.conj().T
    return solve_robust(g_hat_eff, psi_inst, tau, sigma_n_sq, cfg, label="RMMSE-pOCLIS")


def mmse_conventional(g_hat_eff, tau, sigma_n_sq, cfg: PrecoderConfig) -> PrecoderSolution:
    """Cluster-local MMSE precoder that ignores out-of-cluster leakage."""
    return solve_robust(g_hat_eff, None, tau, sigma_n_sq, cfg, label="MMSE")


def mmse_network_wide(g_hat_full, tau, sigma_n_sq, cfg: PrecoderConfig) -> PrecoderSolution:
    """MMSE precoder over the full, unclustered channel estimate."""
    return solve_robust(g_hat_full, None, tau, sigma_n_sq, cfg, label="MMSE-NW")
