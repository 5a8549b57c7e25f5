"""Semantically plausible fake location traces: mobility models, similarity
metrics, semantic clustering, fake generation with privacy tests, and the
evaluation of fakes in publishing and location-based-service settings."""

from .attack import attack, baseline_fakes, expose, localization_attack, run_scenario
from .config import PipelineConfig
from .corpus import Corpus, SynthSpec, coarsen_locations, load_corpus, save_corpus, synth_corpus
from .generator import (
    FakeTrace,
    GenerationParams,
    SemanticSeed,
    decode_randomized_viterbi,
    generate_pool,
    semantize_seed,
)
from .metrics import (
    geographic_similarity,
    mallows_distance,
    mallows_hamming,
    semantic_similarity,
    semantic_similarity_order0,
    semantic_similarity_order1,
)
from .mobility import (
    HAMMING,
    AggregateModel,
    DistanceFunction,
    MobilityProfile,
    PeriodMap,
    Trace,
    aggregate_model,
    learn_profile,
    stationary_distribution,
)
from .privacy import PrivacyParams, Verdict, privacy_test
from .semantics import SemanticClasses, SemanticGraph, build_semantic_graph, cluster_graph, select_cluster_count

__version__ = "0.1.0"
