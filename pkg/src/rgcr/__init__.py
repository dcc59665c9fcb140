"""Randomized graph cluster randomization (RGCR) for estimating global treatment effects
under network interference."""
from ._backend import BACKEND
from .clustering import (Clustering, ConvergenceError, WeightVector, make_weights, one_hop_max,
                         sample_many, spectral_weights, three_net)
from .estimation import (PairProbTable, ProbTable, TableError, estimate_marginals_iid,
                         estimate_marginals_stratified, estimate_pairwise, exact_tables,
                         load_table, mixture_tables, persist_table)
from .estimators import (PositivityError, gate, hajek_mean, ht_covariance, ht_mean,
                         ht_variance_gate, ht_variance_mu, proxy_variance, proxy_variance_ub)
from .experiments import (ExperimentConfig, Report, run_bound_audit, run_estimator_sim,
                          run_mixture_experiment, run_ring_check, run_size_sweep)
from .graph import Graph, GraphError, gen_cycle, gen_path, gen_small_world, load_edge_list
from .randomization import DesignError, assign, exposure_indicators
from .response import ResponseParams, baseline_outcomes, homophily_vector, respond, true_gate

__version__ = "0.1.0"
