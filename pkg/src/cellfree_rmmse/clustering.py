"""Disjoint AP/user clusters, masked channels and the out-of-cluster covariance.

A :class:`ClusterPlan` assigns every AP and every user to one of ``C``
clusters.  Each user is served only by the APs of its own cluster; the APs of
the other clusters reach it only as out-of-cluster leakage (OCL) interference.
Interferer selection is stored as a ``(C, M)`` boolean array: ``selection[i, m]``
is true when AP ``m`` (which belongs to some other cluster) is counted as an OCL
source toward the users of cluster ``i``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.cluster.vq import kmeans2

from .channel import ChannelSet, LargeScaleCoefficients, NetworkGeometry

__all__ = [
    "InfeasiblePartition",
    "ClusterPlan",
    "PartitionedChannels",
    "assign_clusters",
    "build_selection",
    "in_cluster_mask",
    "ocl_mask",
    "partition_channels",
    "analytic_psi",
    "monte_carlo_psi",
    "write_cluster_csv",
]

ALL = "ALL"


class InfeasiblePartition(ValueError):
    """Raised when ``C`` clusters cannot all be non-empty."""


@dataclass(frozen=True)
class ClusterPlan:
    num_clusters: int
    ap_cluster: np.ndarray
    user_cluster: np.ndarray
    selection: np.ndarray

    def __post_init__(self):
        ap = np.asarray(self.ap_cluster, dtype=int)
        us = np.asarray(self.user_cluster, dtype=int)
        C = int(self.num_clusters)
        sel = np.asarray(self.selection, dtype=bool)
        if sel.shape != (C, len(ap)):
            raise ValueError("selection must have shape (C, M)")
        for ids, what in ((ap, "AP"), (us, "user")):
            if ids.min() < 0 or ids.max() >= C:
                raise ValueError(f"{what} cluster ids out of range")
            if len(np.unique(ids)) != C:
                raise ValueError(f"every cluster needs at least one {what}")
        if np.any(sel[ap, np.arange(len(ap))]):
            raise ValueError("an AP cannot be an OCL source toward its own cluster")
        for name, val in (("ap_cluster", ap), ("user_cluster", us), ("selection", sel)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "num_clusters", C)

    @property
    def cluster_sizes(self) -> tuple[np.ndarray, np.ndarray]:
        """(M_i, K_i) counts per cluster."""
        C = self.num_clusters
        return (np.bincount(self.ap_cluster, minlength=C),
                np.bincount(self.user_cluster, minlength=C))

    def with_selection(self, selection) -> "ClusterPlan":
        return ClusterPlan(self.num_clusters, self.ap_cluster, self.user_cluster, selection)


@dataclass(frozen=True)
class PartitionedChannels:
    """Masked channel views of one realisation, all shaped (M, K)."""

    g_hat_eff: np.ndarray
    g_tilde_eff: np.ndarray
    g_ocl_true: np.ndarray
    g_ocl_hat: np.ndarray
    g_ocl_tilde: np.ndarray
    psi: np.ndarray


def _kmeans_labels(points: np.ndarray, C: int, seed: int) -> np.ndarray:
    if C == 1:
        return np.zeros(len(points), dtype=int)
    for attempt in range(32):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(attempt,)))
        _, labels = kmeans2(points, C, minit="++", seed=rng)
        if len(np.unique(labels)) == C:
            return _relabel(labels)
    raise InfeasiblePartition("k-means kept producing empty AP clusters")


def _relabel(labels: np.ndarray) -> np.ndarray:
    # number clusters by first appearance so ids do not depend on centroid order
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first)
    remap = np.empty_like(order)
    remap[order] = np.arange(len(order))
    return remap[labels]


def assign_clusters(zeta: LargeScaleCoefficients, geom: NetworkGeometry, C: int,
                    seed: int = 0) -> ClusterPlan:
    """Group APs by planar k-means, then attach users by best large-scale gain.

    Parameters
    ----------
    zeta : LargeScaleCoefficients
        Gains of shape (M, K).
    geom : NetworkGeometry
        Only the AP positions are used.
    C : int
        Number of clusters, ``1 <= C <= min(M, K)``.
    seed : int
        Seed for k-means++ initialisation.

    Returns
    -------
    ClusterPlan
        Plan with every out-of-cluster AP selected (see :func:`build_selection`).
    """
    z = zeta.zeta if isinstance(zeta, LargeScaleCoefficients) else np.asarray(zeta, dtype=float)
    M, K = z.shape
    if M != geom.num_aps or K != geom.num_users:
        raise ValueError("zeta shape does not match the geometry")
    if not 1 <= C <= min(M, K):
        raise InfeasiblePartition(f"cannot form {C} clusters from {M} APs and {K} users")
    ap_cluster = _kmeans_labels(geom.ap_positions, C, seed)
    user_cluster = ap_cluster[np.argmax(z, axis=0)].copy()

    # repair empty user clusters with the user that has the strongest gain toward them
    while True:
        counts = np.bincount(user_cluster, minlength=C)
        empty = np.flatnonzero(counts == 0)
        if len(empty) == 0:
            break
        c = empty[0]
        toward = z[ap_cluster == c].max(axis=0)
        movable = counts[user_cluster] > 1
        toward = np.where(movable, toward, -np.inf)
        user_cluster[int(np.argmax(toward))] = c

    plan = ClusterPlan(C, ap_cluster, user_cluster, np.zeros((C, M), dtype=bool))
    return build_selection(plan, zeta, ALL)


def build_selection(plan: ClusterPlan, zeta, threshold_db=ALL) -> ClusterPlan:
    """Pick which out-of-cluster APs count as interferers for each cluster.

    ``threshold_db`` is either ``"ALL"`` (every out-of-cluster AP) or a level
    in dB relative to the noise power: AP ``m`` is selected toward cluster ``i``
    when ``max_{k in K_i} zeta[m, k] / noise_variance`` exceeds it.
    """
    C, M = plan.num_clusters, len(plan.ap_cluster)
    foreign = plan.ap_cluster[None, :] != np.arange(C)[:, None]
    if isinstance(threshold_db, str):
        if threshold_db.upper() != ALL:
            raise ValueError(f"threshold must be a number or 'ALL', got {threshold_db!r}")
        return plan.with_selection(foreign)
    if not isinstance(zeta, LargeScaleCoefficients):
        raise TypeError("a numeric threshold needs LargeScaleCoefficients (for the noise level)")
    thr = float(threshold_db)
    if math.isinf(thr) and thr > 0:
        return plan.with_selection(np.zeros((C, M), dtype=bool))
    level = 10.0 ** (thr / 10.0) * zeta.noise_variance
    strongest = np.stack([zeta.zeta[:, plan.user_cluster == i].max(axis=1) for i in range(C)])
    return plan.with_selection(foreign & (strongest > level))


def in_cluster_mask(plan: ClusterPlan) -> np.ndarray:
    """(M, K) mask of serving AP-user pairs."""
    return plan.ap_cluster[:, None] == plan.user_cluster[None, :]


def ocl_mask(plan: ClusterPlan) -> np.ndarray:
    """(M, K) mask of selected interfering AP-user pairs."""
    return plan.selection[plan.user_cluster, :].T


def partition_channels(ch: ChannelSet, plan: ClusterPlan, zeta=None) -> PartitionedChannels:
    """Split one realisation into in-cluster and selected OCL parts.

    ``zeta`` is needed only for the analytic OCL covariance; without it
    ``psi`` is the all-zero matrix when no pair is selected and an error
    otherwise.
    """
    M, K = ch.shape
    if plan.ap_cluster.shape != (M,) or plan.user_cluster.shape != (K,):
        raise ValueError("plan does not match channel dimensions")
    inside = in_cluster_mask(plan)
    ocl = ocl_mask(plan)
    zero = np.zeros((), dtype=complex)
    if zeta is None:
        if ocl.any():
            raise ValueError("zeta is required to form psi when OCL pairs are selected")
        psi = np.zeros((M, M))
    else:
        psi = analytic_psi(zeta, plan)
    return PartitionedChannels(
        g_hat_eff=np.where(inside, ch.g_hat, zero),
        g_tilde_eff=np.where(inside, ch.g_tilde, zero),
        g_ocl_true=np.where(ocl, ch.g_true, zero),
        g_ocl_hat=np.where(ocl, ch.g_hat, zero),
        g_ocl_tilde=np.where(ocl, ch.g_tilde, zero),
        psi=psi,
    )


def analytic_psi(zeta, plan: ClusterPlan) -> np.ndarray:
    """Diagonal covariance of the true OCL channel, shape (M, M)."""
    z = zeta.zeta if isinstance(zeta, LargeScaleCoefficients) else np.asarray(zeta, dtype=float)
    return np.diag(np.sum(np.where(ocl_mask(plan), z, 0.0), axis=1))


def monte_carlo_psi(zeta, plan: ClusterPlan, num_draws: int, rng: np.random.Generator,
                    batch: int = 10000) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean of ``G_o G_o^H`` over i.i.d. Rayleigh draws.

    Returns
    -------
    mean : ndarray, complex (M, M)
    se : ndarray, complex (M, M)
        Standard error of the real and imaginary parts, packed as ``re + 1j*im``.
    """
    z = zeta.zeta if isinstance(zeta, LargeScaleCoefficients) else np.asarray(zeta, dtype=float)
    amp = np.where(ocl_mask(plan), np.sqrt(z), 0.0)
    M = z.shape[0]
    s1 = np.zeros((M, M), dtype=complex)
    s2r = np.zeros((M, M))
    s2i = np.zeros((M, M))
    done = 0
    while done < num_draws:
        n = min(batch, num_draws - done)
        h = (rng.standard_normal((n,) + z.shape) + 1j * rng.standard_normal((n,) + z.shape)) * math.sqrt(0.5)
        g = amp * h
        outer = g @ np.conj(np.swapaxes(g, 1, 2))
        s1 += outer.sum(axis=0)
        s2r += (outer.real**2).sum(axis=0)
        s2i += (outer.imag**2).sum(axis=0)
        done += n
    mean = s1 / num_draws
    var_r = np.maximum(s2r / num_draws - mean.real**2, 0.0) * num_draws / max(num_draws - 1, 1)
    var_i = np.maximum(s2i / num_draws - mean.imag**2, 0.0) * num_draws / max(num_draws - 1, 1)
    se = np.sqrt(var_r / num_draws) + 1j * np.sqrt(var_i / num_draws)
    return mean, se


def write_cluster_csv(plan: ClusterPlan, ap_path, user_path) -> None:
    """Dump AP and user cluster assignments as two small CSV files."""
    for path, ids, col in ((ap_path, plan.ap_cluster, "ap_index"),
                           (user_path, plan.user_cluster, "user_index")):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([col, "cluster_id"])
            w.writerows((i, int(c)) for i, c in enumerate(ids))
