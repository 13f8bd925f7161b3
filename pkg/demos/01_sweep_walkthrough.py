"""Walk through one trial, then a short SNR sweep of all four precoders.

Run with ``python demos/01_sweep_walkthrough.py``.  Takes about ten seconds.
"""

import dataclasses

import numpy as np

from cellfree_rmmse import Scenario, prepare_trial, run_sweep, run_trial
from cellfree_rmmse.harness import PRECODERS


def main():
    scn = Scenario(num_trials=40)

    # One realisation: 24 APs and 6 users grouped into 3 clusters.
    setup = prepare_trial(scn, snr_idx=2, trial=0)
    aps, users = setup.plan.cluster_sizes
    print(f"cluster sizes: APs {aps.tolist()}, users {users.tolist()}")
    leak = np.count_nonzero(setup.parts.g_ocl_hat)
    print(f"{leak} of {setup.g_hat.size} AP-user links leak across cluster borders")

    # Every precoder sees the same channel draw, so the comparison is paired.
    snr = scn.snr_grid_db[2]
    metrics = run_trial(scn, snr, 0, snr_idx=2)
    print(f"\none trial at {snr:g} dB")
    for name in PRECODERS:
        m = metrics[name]
        # the network-wide precoder has no cluster borders and hence no leakage
        rel = f"{10 * np.log10(m.ocl_power / m.noise_power):6.1f} dB" if m.ocl_power else "  none"
        print(f"  {name:13s} sum rate {m.sum_rate:6.2f} bit/s/Hz, leakage/noise {rel}")

    # A short sweep.  The bundled desk scenario uses 500 trials per point.
    res = run_sweep(scn)
    print(f"\nmedian sum rate over {scn.num_trials} trials")
    print("snr_db " + " ".join(f"{n:>13s}" for n in PRECODERS))
    for s in scn.snr_grid_db:
        print(f"{s:6g} " + " ".join(f"{np.median(res.cell(s, n).sum_rates):13.2f}" for n in PRECODERS))

    # Sharing one realisation also makes ablations cheap: drop all leakage
    # handling by selecting no interfering APs.
    blind = dataclasses.replace(scn, selection_threshold=float("inf"))
    m = run_trial(blind, snr, 0, snr_idx=2)
    print(f"\nwith no interferers selected, RMMSE-OCLIS rate {m['RMMSE-OCLIS'].sum_rate:.2f} "
          f"equals MMSE rate {m['MMSE'].sum_rate:.2f}")


if __name__ == "__main__":
    main()
