"""Seeded Monte-Carlo sweeps comparing the four precoders on shared channels.

Every trial owns a counter-based random stream derived from
``(master_seed, snr_index, trial_index)``, so results do not depend on the
order or process in which trials are executed.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import (CsiModel, LargeScaleCoefficients, NetworkGeometry, PropagationParams,
                      draw_channel, large_scale, random_geometry)
from .clustering import (ClusterPlan, PartitionedChannels, assign_clusters, build_selection,
                         in_cluster_mask, partition_channels)
from .metrics import ergodic_sum_rate, evaluate_trial
from .precoding import (PrecoderConfig, PrecoderSolution, SingularSystem, mmse_conventional,
                        mmse_network_wide, rmmse_oclis, rmmse_poclis)

__all__ = [
    "PRECODERS",
    "AllTrialsFailed",
    "Scenario",
    "TrialSetup",
    "TrialOutcome",
    "SweepResult",
    "trial_rng",
    "fixed_ap_positions",
    "prepare_trial",
    "solve_all",
    "run_trial",
    "run_sweep",
    "write_esr_csv",
    "write_ocl_csv",
    "write_trials_csv",
    "write_trace_csv",
]

PRECODERS = ("MMSE-NW", "RMMSE-pOCLIS", "RMMSE-OCLIS", "MMSE")
NORMALIZATIONS = ("mean", "noise", "none")

# stream identifiers for the counter-based generator
_AP_STREAM = 0
_TRIAL_STREAM = 1


class AllTrialsFailed(RuntimeError):
    """Every trial of some (SNR, precoder) cell failed."""


@dataclass(frozen=True)
class Scenario:
    """Complete, immutable description of one experiment.

    ``normalization`` fixes the power units that the SNR axis refers to:

    ``"mean"``
        Gains are divided by their mean over all AP-user pairs of the trial.
        The transmit power stays at ``precoder.total_power`` and the noise is
        set to ``total_power * 10**(-snr/10)``.
    ``"noise"``
        Gains are divided by the thermal noise power, the noise is 1 and the
        transmit power is ``10**(snr/10)``.
    ``"none"``
        Physical units: thermal noise, transmit power ``noise * 10**(snr/10)``.
    """

    num_aps: int = 24
    num_users: int = 6
    num_clusters: int = 3
    area_side: float = 400.0
    wrap_around: bool = False
    redraw_geometry_per_trial: bool = False
    propagation: PropagationParams = field(default_factory=PropagationParams)
    csi: CsiModel = field(default_factory=lambda: CsiModel(sigma_e_sq=1e-3))
    precoder: PrecoderConfig = field(default_factory=PrecoderConfig)
    snr_grid_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    num_trials: int = 100
    master_seed: int = 20240611
    selection_threshold: object = "ALL"
    normalization: str = "mean"
    csi_mode: str = "expected"
    poclis_mode: str = "instantaneous"
    max_failure_rate: float = 0.01

    def __post_init__(self):
        grid = tuple(float(x) for x in self.snr_grid_db)
        if not grid:
            raise ValueError("snr_grid_db must not be empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("snr_grid_db must be strictly increasing")
        object.__setattr__(self, "snr_grid_db", grid)
        if self.num_trials < 1:
            raise ValueError("num_trials must be at least 1")
        if self.num_aps < 1 or self.num_users < 1 or self.area_side <= 0:
            raise ValueError("need positive num_aps, num_users and area_side")
        if not 1 <= self.num_clusters <= min(self.num_aps, self.num_users):
            raise ValueError("num_clusters must lie in [1, min(num_aps, num_users)]")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
        if self.csi_mode not in ("expected", "exact", "literal"):
            raise ValueError("csi_mode must be 'expected', 'exact' or 'literal'")
        if self.poclis_mode not in ("instantaneous", "genie"):
            raise ValueError("poclis_mode must be 'instantaneous' or 'genie'")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        thr = self.selection_threshold
        if isinstance(thr, str):
            if thr.upper() != "ALL":
                raise ValueError("selection_threshold must be a number or 'ALL'")
        elif not isinstance(thr, (int, float)) or math.isnan(thr):
            raise ValueError("selection_threshold must be a number or 'ALL'")

    def link_budget(self, snr_db: float, lsc: LargeScaleCoefficients):
        """Rescaled gains, transmit power and noise power for one SNR point."""
        if self.normalization == "mean":
            scaled = lsc.scaled(float(np.mean(lsc.zeta)))
            pt = self.precoder.total_power
            return scaled, pt, pt * 10.0 ** (-snr_db / 10.0)
        if self.normalization == "noise":
            scaled = lsc.scaled(lsc.noise_variance)
            return scaled, 10.0 ** (snr_db / 10.0), 1.0
        s2 = lsc.noise_variance
        return lsc, s2 * 10.0 ** (snr_db / 10.0), s2


def trial_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for an integer key path."""
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def fixed_ap_positions(scn: Scenario) -> np.ndarray:
    rng = trial_rng(scn.master_seed, _AP_STREAM)
    return rng.uniform(0.0, scn.area_side, size=(scn.num_aps, 2))


@dataclass(frozen=True)
class TrialSetup:
    """Everything a trial needs before precoding."""

    geometry: NetworkGeometry
    lsc: LargeScaleCoefficients
    plan: ClusterPlan
    parts: PartitionedChannels
    g_hat: np.ndarray
    g_tilde: np.ndarray
    g_true: np.ndarray
    total_power: float
    sigma_n_sq: float
    tau: float


def prepare_trial(scn: Scenario, snr_idx: int, trial: int) -> TrialSetup:
    """Draw positions, fading and CSI for one trial and cluster the network."""
    rng = trial_rng(scn.master_seed, _TRIAL_STREAM, snr_idx, trial)
    aps = None if scn.redraw_geometry_per_trial else fixed_ap_positions(scn)
    geom = random_geometry(scn.num_aps, scn.num_users, scn.area_side, rng,
                           scn.wrap_around, ap_positions=aps)
    lsc_phys = large_scale(geom, scn.propagation, rng)
    lsc, pt, s2 = scn.link_budget(scn.snr_grid_db[snr_idx], lsc_phys)
    plan = assign_clusters(lsc, geom, scn.num_clusters, seed=scn.master_seed % 2**32)
    plan = build_selection(plan, lsc, scn.selection_threshold)
    ch = draw_channel(lsc, scn.csi, rng)
    parts = partition_channels(ch, plan, lsc)
    return TrialSetup(geom, lsc, plan, parts, ch.g_hat, ch.g_tilde, ch.g_true, pt, s2, scn.csi.tau)


def solve_all(scn: Scenario, setup: TrialSetup) -> dict:
    """Run the four precoders on the same realisation.

    A precoder whose solve raises :class:`SingularSystem` maps to ``None``.
    """
    cfg = PrecoderConfig(**{**scn.precoder.__dict__, "total_power": setup.total_power})
    parts, tau, s2 = setup.parts, setup.tau, setup.sigma_n_sq
    if scn.poclis_mode == "genie":
        def poclis():
            return mmse_conventional(parts.g_hat_eff, tau, s2, cfg)
    else:
        def poclis():
            return rmmse_poclis(parts.g_hat_eff, parts.g_ocl_hat, tau, s2, cfg)
    solvers = {
        "MMSE-NW": lambda: mmse_network_wide(setup.g_hat, tau, s2, cfg),
        "RMMSE-pOCLIS": poclis,
        "RMMSE-OCLIS": lambda: rmmse_oclis(parts.g_hat_eff, parts.psi, tau, s2, cfg),
        "MMSE": lambda: mmse_conventional(parts.g_hat_eff, tau, s2, cfg),
    }
    sols = {}
    for name in PRECODERS:
        try:
            sols[name] = solvers[name]()
            sols[name].label = name
        except SingularSystem:
            sols[name] = None
    return sols


def _metrics_inputs(scn: Scenario, setup: TrialSetup, name: str):
    """(g_hat, g_tilde, g_ocl, error_variance) seen by users under a precoder."""
    parts = setup.parts
    err = scn.csi.error_variance(setup.lsc.zeta)
    if name == "MMSE-NW":
        return setup.g_hat, setup.g_tilde, np.zeros_like(setup.g_hat), err
    g_ocl = parts.g_ocl_hat + parts.g_ocl_tilde
    if name == "RMMSE-pOCLIS" and scn.poclis_mode == "genie":
        g_ocl = np.zeros_like(g_ocl)
    return parts.g_hat_eff, parts.g_tilde_eff, g_ocl, np.where(in_cluster_mask(setup.plan), err, 0.0)


@dataclass(frozen=True)
class TrialOutcome:
    snr_idx: int
    trial: int
    metrics: dict
    converged: dict
    failed: tuple = ()


def run_trial(scn: Scenario, snr_db: float, trial_index: int, snr_idx: int | None = None,
              return_solutions: bool = False):
    """Metrics of every precoder for one seeded realisation.

    Returns a mapping precoder -> :class:`TrialMetrics`; a precoder whose
    solve raised :class:`SingularSystem` maps to ``None``.
    """
    if snr_idx is None:
        snr_idx = scn.snr_grid_db.index(float(snr_db))
    setup = prepare_trial(scn, snr_idx, trial_index)
    sols = solve_all(scn, setup)
    out = {}
    for name, sol in sols.items():
        if sol is None:
            out[name] = None
            continue
        gh, gt, go, err = _metrics_inputs(scn, setup, name)
        out[name] = evaluate_trial(gh, gt, go, sol.p, setup.tau, setup.sigma_n_sq, scn.csi_mode, err)
    if return_solutions:
        return out, sols, setup
    return out


def _run_chunk(args):
    scn, jobs = args
    res = []
    for snr_idx, trial in jobs:
        m, sols, _ = run_trial(scn, scn.snr_grid_db[snr_idx], trial, snr_idx, return_solutions=True)
        conv = {k: (s.converged if s is not None else False) for k, s in sols.items()}
        failed = tuple(k for k, v in m.items() if v is None)
        res.append(TrialOutcome(snr_idx, trial, m, conv, failed))
    return res


@dataclass
class CellSummary:
    snr_db: float
    precoder: str
    esr_mean: float
    esr_se: float
    n: int
    ocl_power_mean: float
    noise_power_mean: float
    failures: int
    non_converged: int
    sum_rates: np.ndarray
    ocl_powers: np.ndarray


@dataclass
class SweepResult:
    scenario: Scenario
    cells: dict
    outcomes: list

    def cell(self, snr_db: float, precoder: str) -> CellSummary:
        return self.cells[(float(snr_db), precoder)]

    @property
    def failure_rate(self) -> float:
        total = sum(c.n + c.failures for c in self.cells.values())
        return sum(c.failures for c in self.cells.values()) / max(total, 1)

    @property
    def flagged(self) -> bool:
        return self.failure_rate >= self.scenario.max_failure_rate


def _resolve_threads(threads) -> int:
    if threads in (None, "AUTO", "auto", 0):
        return os.cpu_count() or 1
    return max(1, int(threads))


def run_sweep(scn: Scenario, threads=1) -> SweepResult:
    """All trials at all SNR points, aggregated per (SNR, precoder) cell."""
    jobs = [(i, t) for i in range(len(scn.snr_grid_db)) for t in range(scn.num_trials)]
    n_workers = min(_resolve_threads(threads), len(jobs))
    if n_workers <= 1:
        outcomes = _run_chunk((scn, jobs))
    else:
        size = math.ceil(len(jobs) / (4 * n_workers))
        chunks = [(scn, jobs[i:i + size]) for i in range(0, len(jobs), size)]
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            # map preserves submission order, so the result is schedule independent
            outcomes = [o for part in pool.map(_run_chunk, chunks) for o in part]

    cells = {}
    for i, snr in enumerate(scn.snr_grid_db):
        rows = [o for o in outcomes if o.snr_idx == i]
        for name in PRECODERS:
            ok = [o.metrics[name] for o in rows if o.metrics[name] is not None]
            failures = len(rows) - len(ok)
            if not ok:
                raise AllTrialsFailed(f"every trial failed for {name} at {snr:g} dB")
            esr = ergodic_sum_rate([m.rates for m in ok])
            ocl = np.array([m.ocl_power for m in ok])
            cells[(snr, name)] = CellSummary(
                snr_db=snr, precoder=name, esr_mean=esr.mean, esr_se=esr.se, n=esr.n,
                ocl_power_mean=float(ocl.mean()),
                noise_power_mean=float(np.mean([m.noise_power for m in ok])),
                failures=failures,
                non_converged=sum(1 for o in rows if o.metrics[name] is not None and not o.converged[name]),
                sum_rates=np.array([m.sum_rate for m in ok]),
                ocl_powers=ocl,
            )
    return SweepResult(scn, cells, outcomes)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _dbm(watts: float) -> float:
    return 10.0 * math.log10(watts) + 30.0 if watts > 0 else -math.inf


def write_esr_csv(res: SweepResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["snr_db", "precoder", "esr_mean", "esr_se", "n"])
        for (snr, name), c in res.cells.items():
            w.writerow([_fmt(snr), name, _fmt(c.esr_mean), _fmt(c.esr_se), c.n])


def write_ocl_csv(res: SweepResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["snr_db", "precoder", "ocl_power_mean_dbm", "noise_power_dbm"])
        for (snr, name), c in res.cells.items():
            w.writerow([_fmt(snr), name, _fmt(_dbm(c.ocl_power_mean)), _fmt(_dbm(c.noise_power_mean))])


TRIAL_COLUMNS = ["snr_db", "trial", "precoder", "sum_rate", "ocl_power", "csi_mui_power",
                 "icl_residual_power", "noise_power", "clamped_users", "converged"]


def write_trials_csv(res: SweepResult, path) -> None:
    """One row per (trial, precoder); failed solves are written with empty metrics."""
    grid = res.scenario.snr_grid_db
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIAL_COLUMNS)
        for o in res.outcomes:
            for name in PRECODERS:
                m = o.metrics[name]
                if m is None:
                    w.writerow([_fmt(grid[o.snr_idx]), o.trial, name] + [""] * 6 + [0])
                    continue
                w.writerow([_fmt(grid[o.snr_idx]), o.trial, name, _fmt(m.sum_rate), _fmt(m.ocl_power),
                            _fmt(m.csi_mui_power), _fmt(m.icl_residual_power), _fmt(m.noise_power),
                            m.clamped_users, int(o.converged[name])])


def write_trace_csv(sols: dict, path) -> None:
    """Solver traces of several precoders as (precoder, iteration, J, lambda, f) rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["precoder", "iteration", "objective", "lambda", "f"])
        for name, sol in sols.items():
            if sol is None:
                continue
            for it, J, lam, f in sol.trace:
                w.writerow([name, it, _fmt(J), _fmt(lam), _fmt(f)])
