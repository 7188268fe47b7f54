"""Deadline-constrained job offloading and resource allocation for MEC."""
from .model import (AssignmentInstance, ChannelEnv, EdgeServer, Job, NetworkRing, PenaltyShape,
                    Problem, ProblemError, RingAccess, Solution, check_add_feasible,
                    compute_offload_rate, compute_offload_time, compute_utility, load_problem,
                    save_problem, validate_solution)
from .enumeration import InstancePool, dominance_prune, enumerate_instances
from .localratio import idassign
from .baselines import game, greedy, iterative
from .exact import BnBConfig, exact_opt, exhaustive_opt

__version__ = "0.1.0"
