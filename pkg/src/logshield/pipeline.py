"""End-to-end helpers chaining generator, provenance, traces and encoding."""
from __future__ import annotations

from dataclasses import dataclass

from .embedding import Vocabulary
from .provenance import BackTree, build_back_tree, tree_from_events
from .synth import GeneratorConfig, SynthCorpus, generate
from .traces import Trace, TraceConfig, finalize_trace, generate_traces

# Desk corpus: about 20k benign and 2k malicious traces.
DESK_CORPUS = GeneratorConfig(benign_trees_per_host=430, malicious_chains_per_host=240, seed=7)


@dataclass
class PreparedData:
    corpus: SynthCorpus
    back: BackTree
    traces: list[Trace]         # finalized
    vocab: Vocabulary


def traces_from_corpus(corpus: SynthCorpus, trace_cfg: TraceConfig) -> tuple[BackTree, list[Trace]]:
    back = build_back_tree(tree_from_events(corpus.events, corpus.malicious_ids))
    raw = generate_traces(back, trace_cfg)
    return back, [finalize_trace(t, trace_cfg) for t in raw]


def prepare(gen_cfg: GeneratorConfig = DESK_CORPUS, trace_cfg: TraceConfig | None = None) -> PreparedData:
    trace_cfg = trace_cfg or TraceConfig(seed=gen_cfg.seed)
    corpus = generate(gen_cfg)
    back, traces = traces_from_corpus(corpus, trace_cfg)
    return PreparedData(corpus, back, traces, Vocabulary.from_schema(corpus.schema))
