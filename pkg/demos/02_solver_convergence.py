"""How the robust solver finds its receive scaling ``f`` and multiplier.

The solver minimises the robust MSE over the precoder ``P`` on the power
sphere and over the scalar ``f``.  For a fixed ``f`` the best ``P`` is exact,
so the problem reduces to a one-dimensional search.  This script prints that
profile for one trial, then the solver's answer and its stationarity residuals.
"""

import numpy as np

from cellfree_rmmse import PrecoderConfig, Scenario, prepare_trial
from cellfree_rmmse.precoding import (precoder_at_scaling, rmmse_oclis,
                                      stationarity_residuals)


def main():
    scn = Scenario()
    setup = prepare_trial(scn, snr_idx=4, trial=3)
    g, psi = setup.parts.g_hat_eff, setup.parts.psi
    tau, s2, pt = setup.tau, setup.sigma_n_sq, setup.total_power
    cfg = PrecoderConfig(total_power=pt)

    sol = rmmse_oclis(g, psi, tau, s2, cfg)

    print("profile of the objective with P re-optimised at every f")
    print(f"{'f / f*':>8s} {'J':>14s}")
    for r in np.geomspace(0.25, 4.0, 9):
        _, _, J = precoder_at_scaling(g, psi, tau, s2, sol.f * r, cfg)
        print(f"{r:8.3f} {J:14.8f}")

    rp, rf = stationarity_residuals(sol, g, psi, tau, s2)
    print(f"\nsolution: f = {sol.f:.6g}, lambda = {sol.lambda_:.6g}, J = {sol.objective:.10g}")
    print(f"{sol.iterations} objective evaluations, converged = {sol.converged}")
    print(f"relative residuals: P-equation {rp:.1e}, f-equation {rf:.1e}")
    print(f"power used: {sol.power:.15g} of {pt:g}")

    # With no leakage the same code returns the closed-form MMSE precoder.
    plain = rmmse_oclis(g, np.zeros_like(psi), tau, s2, cfg)
    print(f"\nwithout leakage: lambda * f^2 = {plain.lambda_ * plain.f ** 2:.6g}, "
          f"K * noise / Pt = {g.shape[1] * s2 / pt:.6g}")


if __name__ == "__main__":
    main()
