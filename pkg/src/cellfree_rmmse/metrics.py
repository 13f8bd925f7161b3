"""Per-user SINR, rates, interference powers and the ergodic sum rate.

With estimated channel ``g_hat``, estimation error ``g_tilde`` and out-of-cluster
channel ``g_ocl`` (all columns of (M, K) matrices), user ``k`` receives

    y_k = (1/tau) (g_hat_k + g_tilde_k)^H P s + (1/tau) g_ocl_k^H P s + n_k.

Its power splits into the desired signal ``|g_hat_k^H p_k|^2 / tau^2``, the
intra-cluster residual ``sum_{j != k} |g_hat_k^H p_j|^2 / tau^2``, the CSI term
``delta_k / tau^2``, the leakage ``phi_k`` and the noise.  Here ``g_ocl`` is the
out-of-cluster part of ``g_hat + g_tilde``, i.e. ``tau`` times the true channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TrialMetrics",
    "PowerTerms",
    "decompose_power",
    "expected_csi_power",
    "sinr_per_user",
    "ocl_interference_power",
    "rates_from_sinr",
    "ergodic_sum_rate",
    "ErgodicRate",
    "evaluate_trial",
]

CSI_MODES = ("expected", "exact", "literal")


@dataclass(frozen=True)
class TrialMetrics:
    gamma: np.ndarray
    rates: np.ndarray
    sum_rate: float
    ocl_power: float
    csi_mui_power: float
    icl_residual_power: float
    noise_power: float
    clamped_users: int = 0


@dataclass(frozen=True)
class PowerTerms:
    """Per-user received-power components, each of length K."""

    signal: np.ndarray
    icl: np.ndarray
    csi: np.ndarray
    ocl: np.ndarray
    noise: float

    @property
    def total(self) -> np.ndarray:
        return self.signal + self.icl + self.csi + self.ocl + self.noise


def decompose_power(g_hat, g_tilde, g_ocl, p, tau, sigma_n_sq, csi_mode: str = "exact") -> PowerTerms:
    """Split ``E_{s,n}|y_k|^2`` into its components.

    ``csi_mode="exact"`` expands ``|(g_hat + g_tilde)^H p_t|^2`` exactly, so that
    the components sum to the second moment of the received sample.
    ``csi_mode="literal"`` drops the factor 2 and the conjugate on the cross term.
    """
    S = g_hat.conj().T @ p
    E = g_tilde.conj().T @ p
    O = g_ocl.conj().T @ p
    diag = np.abs(np.diag(S)) ** 2
    signal = diag / tau**2
    icl = (np.sum(np.abs(S) ** 2, axis=1) - diag) / tau**2
    if csi_mode == "exact":
        cross = 2.0 * np.real(S * E.conj())
    elif csi_mode == "literal":
        cross = np.real(S * E)
    else:
        raise ValueError(f"unknown csi_mode {csi_mode!r}")
    csi = np.sum(cross + np.abs(E) ** 2, axis=1) / tau**2
    ocl = np.sum(np.abs(O) ** 2, axis=1) / tau**2
    return PowerTerms(signal, icl, csi, ocl, float(sigma_n_sq))


def expected_csi_power(error_variance, p, tau) -> np.ndarray:
    """CSI term ``delta_k / tau^2`` averaged over a zero-mean error.

    ``error_variance`` is the (M, K) matrix of ``E|g_tilde_mk|^2`` restricted to
    the pairs the precoder has CSI for.  The error is treated as uncorrelated
    with the estimate, which is the model the robust objective is built on, so
    the cross term drops out and ``|g_tilde_k^H p_t|^2`` is replaced by its
    mean.  The channel generator itself correlates the two (their covariance
    is ``-sigma_e^2 zeta``); the neglected part is of relative order
    ``sigma_e^2``.
    """
    load = np.sum(np.abs(p) ** 2, axis=1)
    return (np.asarray(error_variance).T @ load) / tau**2


def sinr_per_user(g_hat_eff, g_tilde, g_ocl_true, p, tau, sigma_n_sq, csi_mode: str = "exact",
                  error_variance=None, return_terms: bool = False):
    """SINR of every user.

    Parameters
    ----------
    g_hat_eff, g_tilde, g_ocl_true : ndarray, complex (M, K)
        In-cluster estimate, in-cluster estimation error and out-of-cluster
        channel (already multiplied by ``tau``, i.e. ``g_hat + g_tilde`` on the
        selected leakage pairs).
    p : ndarray, complex (M, K)
    tau, sigma_n_sq : float
    csi_mode : {"exact", "literal", "expected"}
        How the CSI-error term is formed.  ``"expected"`` replaces the
        per-realisation term by its mean and needs ``error_variance``.
    return_terms : bool
        Also return the number of users whose denominator had to be clamped
        at the noise level (only possible in the realisation-based modes).

    Returns
    -------
    gamma : ndarray (K,)
    clamped : int, optional
    """
    if csi_mode not in CSI_MODES:
        raise ValueError(f"unknown csi_mode {csi_mode!r}")
    base = "exact" if csi_mode == "expected" else csi_mode
    terms = decompose_power(g_hat_eff, g_tilde, g_ocl_true, p, tau, sigma_n_sq, base)
    csi = terms.csi
    if csi_mode == "expected":
        if error_variance is None:
            raise ValueError("csi_mode='expected' needs error_variance")
        csi = expected_csi_power(error_variance, p, tau)
    denom = csi + terms.ocl + terms.icl + sigma_n_sq
    clamped = int(np.sum(denom < sigma_n_sq))
    gamma = terms.signal / np.maximum(denom, sigma_n_sq)
    if return_terms:
        return gamma, clamped
    return gamma


def ocl_interference_power(g_ocl_true, p, tau) -> float:
    """Total leakage power ``||g_ocl^H P||_F^2 / tau^2`` over all users."""
    return float(np.linalg.norm(np.asarray(g_ocl_true).conj().T @ p) ** 2 / tau**2)


def rates_from_sinr(gamma) -> np.ndarray:
    return np.log2(1.0 + np.asarray(gamma, dtype=float))


@dataclass(frozen=True)
class ErgodicRate:
    mean: float
    se: float
    n: int
    se_defined: bool


def ergodic_sum_rate(trial_rates) -> ErgodicRate:
    """Mean sum rate across trials with the standard error of the mean.

    With a single trial the standard error is reported as 0 and flagged
    undefined.
    """
    sums = np.array([float(np.sum(r)) for r in trial_rates])
    n = len(sums)
    if n == 0:
        raise ValueError("need at least one trial")
    if n == 1:
        return ErgodicRate(float(sums[0]), 0.0, 1, False)
    return ErgodicRate(float(sums.mean()), float(sums.std(ddof=1) / math.sqrt(n)), n, True)


def evaluate_trial(g_hat_eff, g_tilde_eff, g_ocl_true, p, tau, sigma_n_sq,
                   csi_mode: str = "expected", error_variance=None) -> TrialMetrics:
    """All per-trial figures of merit for one precoder."""
    gamma, clamped = sinr_per_user(g_hat_eff, g_tilde_eff, g_ocl_true, p, tau, sigma_n_sq,
                                   csi_mode, error_variance, return_terms=True)
    gamma = np.asarray(gamma)
    terms = decompose_power(g_hat_eff, g_tilde_eff, g_ocl_true, p, tau, sigma_n_sq, "exact")
    if csi_mode == "expected":
        csi = float(np.sum(expected_csi_power(error_variance, p, tau)))
    else:
        csi = float(np.sum(decompose_power(g_hat_eff, g_tilde_eff, g_ocl_true, p, tau,
                                           sigma_n_sq, csi_mode).csi))
    rates = rates_from_sinr(gamma)
    K = len(gamma)
    return TrialMetrics(
        gamma=gamma,
        rates=rates,
        sum_rate=float(rates.sum()),
        ocl_power=float(terms.ocl.sum()),
        csi_mui_power=csi,
        icl_residual_power=float(terms.icl.sum()),
        noise_power=K * float(sigma_n_sq),
        clamped_users=clamped,
    )
