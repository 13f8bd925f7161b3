"""Check the analytic leakage covariance against simulated fading.

The robust precoder only needs the second-order statistics of the channels
from foreign APs.  For i.i.d. Rayleigh fading these reduce to a diagonal
matrix of summed large-scale gains.  This script draws many fading
realisations for one small network and compares.
"""

import dataclasses

import numpy as np

from cellfree_rmmse import Scenario, prepare_trial
from cellfree_rmmse.clustering import analytic_psi
from cellfree_rmmse.harness import trial_rng
from cellfree_rmmse.verify import psi_monte_carlo


def main():
    scn = dataclasses.replace(Scenario(), num_aps=6, num_users=3, num_clusters=2)
    setup = prepare_trial(scn, 0, 0)
    psi = analytic_psi(setup.lsc, setup.plan)
    mean, se = psi_monte_carlo(setup.lsc.zeta, setup.plan, scn.csi, 100_000, trial_rng(1, 2))

    print("AP  cluster  analytic    simulated   z")
    for m in range(scn.num_aps):
        z = (mean[m, m].real - psi[m, m]) / se[m, m].real if se[m, m].real else 0.0
        print(f"{m:2d}  {setup.plan.ap_cluster[m]:7d}  {psi[m, m]:.4e}  {mean[m, m].real:.4e}  {z:+.2f}")
    # off-diagonal entries average to zero; measure them in standard errors
    off = ~np.eye(scn.num_aps, dtype=bool) & (se.real > 0)
    z = np.abs(mean.real[off]) / se.real[off]
    print(f"\n{off.sum()} off-diagonal entries, largest |mean| / SE = {z.max():.2f}")


if __name__ == "__main__":
    main()
