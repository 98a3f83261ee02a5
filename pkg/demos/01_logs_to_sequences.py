"""
From an event log to model-ready sequences
==========================================

Walks one small synthetic log through every data stage: the provenance
tree, leaf-to-root traces, temporal slots and dynamic masking.

    python3 demos/01_logs_to_sequences.py
"""
import numpy as np

from logshield.embedding import TemporalConfig, Vocabulary, apply_mask, assign_slots, encode_unmasked
from logshield.provenance import build_back_tree, tree_from_events
from logshield.synth import GeneratorConfig, generate
from logshield.traces import MALICIOUS, TraceConfig, finalize_trace, generate_traces

# A tiny corpus: one host, a handful of benign process trees and two injected
# malicious chains. The generator wires each child's actor to its parent's
# object, so the provenance rule recovers the generated trees exactly.
corpus = generate(GeneratorConfig(n_hosts=1, benign_trees_per_host=12, malicious_chains_per_host=2, seed=3))
print(f"{len(corpus.events)} events, {len(corpus.malicious_ids)} labelled malicious")
for e in corpus.events[:5]:
    print("  ", e.event_id, e.actor_id, "->", e.object_id, e.token, f"t={e.timestamp:.2f}")

# %% Provenance tree and its child -> parent inversion
tree = tree_from_events(corpus.events, corpus.malicious_ids)
back = build_back_tree(tree)
recovered = sum(back.parent_of.get(c) == p for c, p in corpus.parents.items())
print(f"\n{len(tree.roots)} roots; {recovered}/{len(corpus.parents)} generated edges recovered")

# %% Traces: walk from a start event to its root, keep chains of >= 3 events
cfg = TraceConfig(max_length=16, min_length=3, seed=3)
traces = [finalize_trace(t, cfg) for t in generate_traces(back, cfg)]
mal = [t for t in traces if t.label == MALICIOUS]
print(f"\n{len(traces)} traces, {len(mal)} malicious")
example = mal[0] if mal else traces[0]
for ev in example.content:
    print(f"   {ev.token:18s} delta {ev.time_delta:7.3f}s")

# %% Temporal slots: cumulative time bucketed by a 2 s window, scaled to (0, 1]
print("\nworked example, deltas 1, 0.5, 1, 2.5 with w = 2:", assign_slots([1, 0.5, 1, 2.5], 2.0))
print("example trace slots:", np.round(assign_slots([e.time_delta for e in example.content], 2.0), 3))

# %% Encoding and dynamic masking: a fresh mask every time a batch is drawn.
# Rows that draw no mask are redrawn, which lifts the rate above 15% when many
# traces are only a few events long.
vocab = Vocabulary.from_schema(corpus.schema)
batch = encode_unmasked(traces, vocab, TemporalConfig(2.0))
print(f"\nvocabulary of {len(vocab)} tokens; batch {batch.token_ids.shape}")
rng = np.random.default_rng(0)
for draw in range(2):
    m = apply_mask(batch, 0.15, rng)
    masked = (m.mlm_targets >= 0).sum()
    print(f"draw {draw}: {masked} masked of {batch.eligible.sum()} content positions "
          f"({masked / batch.eligible.sum():.1%}); row 0 ids {m.token_ids[0, :8].tolist()}")
