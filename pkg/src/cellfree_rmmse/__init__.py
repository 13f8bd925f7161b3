"""Clustered cell-free MIMO downlink simulation with robust MMSE precoding."""

from .channel import (ChannelSet, CsiModel, LargeScaleCoefficients, NetworkGeometry,
                      PropagationParams, attenuation_db, draw_channel, large_scale,
                      noise_variance, path_loss_db)
from .clustering import (ClusterPlan, InfeasiblePartition, PartitionedChannels, analytic_psi,
                         assign_clusters, build_selection, partition_channels)
from .harness import (PRECODERS, AllTrialsFailed, Scenario, SweepResult, TrialSetup, prepare_trial,
                      run_sweep, run_trial)
from .metrics import (TrialMetrics, ergodic_sum_rate, ocl_interference_power, sinr_per_user)
from .precoding import (NonHermitianResidue, PrecoderConfig, PrecoderSolution, SingularSystem,
                        mmse_conventional, mmse_network_wide, objective_ji, precoder_at_scaling,
                        rmmse_oclis, rmmse_poclis)

__version__ = "0.1.0"
