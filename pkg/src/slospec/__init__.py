"""Simulator for SLO-customized speculative decoding in multi-SLO LLM serving."""

from .engine import (AdaptiveConfig, Engine, EngineConfig, LatencyModel, RequestSpec, SchedulerPolicy,
                     adaptive_params, requests_from_trace, run)
from .lm_sim import LmOracle, OracleKind, TableOracle, next_token_dist, sample_token
from .metrics import RequestRecord, RunReport, aggregate, judge_request
from .optimal_sched import OptimalPlan, brute_force_optimal, construct_optimal, truncated_inf_tree
from .sched_math import RequestState, slo_deficit, slo_deficit_capped
from .spec_sched import DraftPlan, SpecParams, plan_iteration, slo_select, speculate, throughput_select
from .token_tree import Frontier, TokenTree, expected_accepted
from .verify import VerifyOutcome, mean_acceptance, simulate_acceptance, verify_tree
from .workload import SloCategory, TraceRecord, default_categories, gen_trace, load_trace, save_trace

__version__ = "0.1.0"
