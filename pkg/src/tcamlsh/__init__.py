"""Ternary locality-sensitive hashing for Euclidean near-neighbor search in a simulated TCAM."""

from .datagen import PointSet, QuerySet, gen_queries_random, gen_random_cube, gen_threshold, sphere_points
from .evalkit import (
    RandomPipeline, ThresholdPipeline, evaluate, find_delta_opt, model_delta_opt, model_for, sweep_delta,
)
from .hashing import (
    SignatureScheme, TernaryHashFunction, collision_prob, match_bounds, mismatch_prob, p1, p2, phi,
    phi_simple_bounds, phi_tight_bounds, psi_bar, rho_estimate, sample_hash_function, signature,
)
from .index import NNIndex, Neighbor, brute_force_nn, build_index, query_nn, query_ss
from .ladder import LadderIndex, build_ladder, query_anns
from .metrics import MetricsReport, ModelParams, emit_report, model_predict, parse_report
from .planner import InfeasiblePlanError, Plan, plan_log_width, plan_multi_lookup, plan_single_lookup
from .simhash import flip_bits, simhash_embed, simhash_signature
from .tcam import HW_288x512K, HardwareProfile, Match, TcamTable
from .ternary import Ternion, TernaryWord, decode_binary, decode_text, encode_binary, encode_text, word_match

__version__ = "0.1.0"
