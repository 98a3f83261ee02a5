"""Provenance-trace APT detection with a temporal-embedding transformer, in numpy.

Pipeline: canonical event log -> provenance tree -> leaf-to-root traces ->
encoded sequences -> transformer (or LSTM baseline) -> metrics.
"""
__version__ = "0.1.0"

from .embedding import TemporalConfig, Vocabulary, assign_slots, encode, encode_unmasked
from .events import OPTC_SCHEMA, TC_E3_SCHEMA, DatasetSchema, RawEvent, parse_events, parse_labels
from .provenance import build_back_tree, build_cp_mapping, build_tree, tree_from_events
from .traces import Trace, TraceConfig, finalize_trace, generate_traces
from .transformer import ModelConfig, TransformerClassifier
from .lstm import LstmClassifier, LstmConfig
from .training import TrainConfig, compute_metrics, evaluate, split, train

__all__ = [
    "__version__",
    "DatasetSchema", "OPTC_SCHEMA", "TC_E3_SCHEMA", "RawEvent", "parse_events", "parse_labels",
    "build_cp_mapping", "build_tree", "build_back_tree", "tree_from_events",
    "Trace", "TraceConfig", "generate_traces", "finalize_trace",
    "Vocabulary", "TemporalConfig", "assign_slots", "encode", "encode_unmasked",
    "ModelConfig", "TransformerClassifier", "LstmConfig", "LstmClassifier",
    "TrainConfig", "train", "evaluate", "split", "compute_metrics",
]
