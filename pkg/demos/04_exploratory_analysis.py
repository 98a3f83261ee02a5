"""
Exploratory statistics of benign versus malicious activity
==========================================================

Object and action frequencies, the time-delta distribution and the mutual
information of each feature with the label, per event and per trace.

    python3 demos/04_exploratory_analysis.py
"""
import dataclasses

import numpy as np

from logshield.eda import (
    event_population,
    mi_rows,
    object_action_matrix,
    population_labels,
    time_delta_histogram,
    trace_contains,
)
from logshield.pipeline import DESK_CORPUS, prepare

data = prepare(dataclasses.replace(DESK_CORPUS, benign_trees_per_host=100, malicious_chains_per_host=60))
schema = data.corpus.schema
pop = event_population(data.back)
print(f"{len(pop)} events, {sum(o.label for o in pop)} malicious")

# %% Which objects and actions each class touches (shares of the class total)
benign, malicious = object_action_matrix(pop, schema)
print("\naction      benign  malicious")
for j, a in enumerate(schema.actions):
    print(f"{a:10s} {benign.counts[:, j].sum() / benign.total:7.3f} {malicious.counts[:, j].sum() / malicious.total:9.3f}")

# %% Low and slow: malicious steps wait longer between events
hist = time_delta_histogram(pop, [0, 0.5, 1, 2, 4, 8, 16, 32, 64, 1e9])
print(f"\nmean delta: benign {hist.means[0]:.2f}s, malicious {hist.means[1]:.2f}s (# benign, * malicious)")
for k in range(len(hist.edges) - 1):
    b, m = hist.counts[0][k] / hist.counts[0].sum(), hist.counts[1][k] / hist.counts[1].sum()
    label = f"[{hist.edges[k]:g}, {hist.edges[k + 1]:g})"
    print(f"  {label:12s} {'#' * int(40 * b):40s} {'*' * int(40 * m)}")

# %% Mutual information with the label (bits)
labels = population_labels(pop)
objects = {o: [int(x.object == o) for x in pop] for o in schema.objects}
per_event = mi_rows(objects, labels)
per_trace = mi_rows(trace_contains(data.traces, schema, unit="pair"), [t.label for t in data.traces])
print("\nper-event object presence:")
for r in per_event:
    print(f"  {r['feature']:10s} {r['mi']:.4f}")
print("top per-trace pair presence:")
for r in sorted(per_trace, key=lambda r: -r["mi"])[:5]:
    print(f"  {r['feature']:18s} {r['mi']:.4f}")
print(f"\nmalicious share of traces: {np.mean([t.label for t in data.traces]):.3f}")
