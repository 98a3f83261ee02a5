"""Command-line entry point: one subcommand per pipeline stage.

Every run writes a manifest (argv, resolved config, input/output hashes,
seed, version, duration) next to its outputs. Exit status is 0 on success,
2 when an input or flag breaks a contract, 1 on I/O failure.

A JSON file given with ``--config`` supplies flag defaults (keys are flag
names with dashes or underscores); flags on the command line win. Relative
``--out`` paths resolve under ``$LOGSHIELD_OUT_ROOT`` when it is set.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import tempfile
import time
import warnings

import numpy as np

from . import __version__
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .eda import (
    comparison_csv,
    event_population,
    mi_csv,
    mi_rows,
    object_action_matrix,
    object_presence,
    action_presence,
    time_delta_histogram,
    trace_contains,
    trace_population,
)
from .embedding import EncodingError, TemporalConfig, Vocabulary, apply_mask, encode_unmasked
from .events import (
    OPTC_SCHEMA,
    TC_E3_SCHEMA,
    IngestError,
    LabelSet,
    load_schema,
    parse_events,
    parse_labels,
    write_events,
    write_labels,
)
from .lstm import cross_classification_report, write_cross_report
from .optim import AdamWConfig
from .provenance import StructureError, build_back_tree, read_tree, tree_from_events, write_tree
from .synth import GeneratorConfig, generate, write_corpus
from .traces import TraceConfig, finalize_trace, generate_traces, read_traces, write_traces
from .training import (
    DEFAULT_LR,
    SamplingPlan,
    TrainConfig,
    TrainingDiverged,
    data_size_sweep,
    evaluate,
    format_imbalance,
    format_metrics,
    format_run_log,
    format_sweep,
    imbalance_sweep,
    predict,
    split,
    train,
)
from .transformer import ContractError

OUT_ROOT_ENV = "LOGSHIELD_OUT_ROOT"
BUILTIN_SCHEMAS = {"optc": OPTC_SCHEMA, "tc-e3": TC_E3_SCHEMA}
CONTRACT_ERRORS = (IngestError, EncodingError, StructureError, ContractError, CheckpointError,
                   ValueError, KeyError, FloatingPointError)


class UsageError(Exception):
    """A flag or config problem; reported with exit status 2."""


# -- small helpers ------------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_atomic(path, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def resolve_out(path: str) -> str:
    root = os.environ.get(OUT_ROOT_ENV)
    if root and not os.path.isabs(path):
        return os.path.join(root, path)
    return path


def load_schema_arg(value: str):
    if value in BUILTIN_SCHEMAS:
        return BUILTIN_SCHEMAS[value]
    with open(value, "rb") as f:
        return load_schema(f)


def read_labels_arg(path):
    if not path:
        return LabelSet(frozenset())
    with open(path, "rb") as f:
        return parse_labels(f)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def fmt(v):
    return f"{v:.6f}" if isinstance(v, float) else v


class Run:
    """Collects inputs and outputs of one invocation and writes its manifest."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = argv
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self.t0 = time.perf_counter()

    def input(self, path):
        if path:
            self.inputs[str(path)] = sha256_file(path)
        return path

    def output(self, path, text: str | None = None):
        if text is not None:
            write_atomic(path, text)
        self.outputs.append(str(path))
        return path

    def finish(self, manifest_path) -> None:
        config = {k: v for k, v in vars(self.args).items() if k not in ("func", "config")}
        manifest = {
            "command": self.args.command,
            "argv": self.argv,
            "config": config,
            "config_file": self.args.config,
            "inputs": self.inputs,
            "outputs": {p: sha256_file(p) for p in self.outputs if os.path.isfile(p)},
            "seed": getattr(self.args, "seed", None),
            "version": __version__,
            "duration_seconds": round(time.perf_counter() - self.t0, 3),
        }
        write_atomic(manifest_path, json.dumps(manifest, indent=1, sort_keys=True, default=str) + "\n")


def file_manifest(path) -> str:
    return str(path) + ".manifest.json"


def dir_manifest(path) -> str:
    return os.path.join(path, "run_manifest.json")


def out_dir(args) -> str:
    d = resolve_out(args.out)
    os.makedirs(d, exist_ok=True)
    return d


def out_file(args) -> str:
    p = resolve_out(args.out)
    parent = os.path.dirname(os.path.abspath(p))
    os.makedirs(parent, exist_ok=True)
    return p


def load_trace_file(run: Run, path):
    run.input(path)
    traces = read_traces(path)
    if not traces:
        raise ValueError(f"{path}: no traces")
    return traces


def train_config(args) -> TrainConfig:
    lr = args.lr if args.lr is not None else DEFAULT_LR[args.model]
    opt = AdamWConfig(lr=lr, weight_decay=args.weight_decay)
    cw = tuple(float(x) for x in args.class_weights.split(","))
    if len(cw) != 2:
        raise UsageError("--class-weights takes two comma-separated numbers")
    return TrainConfig(epochs=args.epochs, batch_size=args.batch_size, optimizer=opt,
                       mlm_weight=args.mlm_weight, p_mask=args.mask_prob, class_weights=cw,
                       window_seconds=args.window, seed=args.seed, lr_schedule=args.lr_schedule)


def model_kwargs(args) -> dict:
    if args.model == "transformer":
        return {"d_model": args.d_model, "n_heads": args.heads, "n_layers": args.layers,
                "d_ff": args.d_ff, "dropout_rate": args.dropout}
    return {"embed_dim": args.d_model, "hidden_size": args.hidden, "layers": args.lstm_layers,
            "bidirectional": args.bidirectional}


def parse_ratios(text: str) -> tuple[float, ...]:
    try:
        r = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"--split expects comma-separated numbers, got {text!r}") from None
    if len(r) != 3:
        raise UsageError("--split takes three ratios: train,val,test")
    return r


# -- subcommands ----------------------------------------------------------------------

def cmd_synth(args, run: Run) -> str:
    d = out_dir(args)
    cfg = GeneratorConfig(
        n_hosts=args.hosts, benign_trees_per_host=args.benign_trees,
        malicious_chains_per_host=args.malicious_chains, mu_benign=args.mu_benign,
        mu_malicious=args.mu_malicious, camouflage=args.camouflage, seed=args.seed,
    )
    corpus = generate(cfg)
    for p in write_corpus(corpus, d).values():
        run.output(p)
    print(f"{len(corpus.events)} events, {len(corpus.malicious_ids)} malicious -> {d}")
    return dir_manifest(d)


def cmd_ingest(args, run: Run) -> str:
    schema = load_schema_arg(args.schema)
    errors = []
    with open(run.input(args.events), "rb") as f:
        events = parse_events(f, schema, lenient=args.lenient, errors=errors)
    labels = read_labels_arg(run.input(args.labels))
    d = out_dir(args)
    run.output(os.path.join(d, "events.jsonl"))
    write_events(os.path.join(d, "events.jsonl"), events)
    run.output(os.path.join(d, "labels.txt"))
    write_labels(os.path.join(d, "labels.txt"), labels)
    run.output(os.path.join(d, "schema.json"), schema.to_json() + "\n")
    for e in errors:
        print(f"skipped {e}", file=sys.stderr)
    known = {e.event_id for e in events}
    unknown = len(set(labels) - known)
    print(f"{len(events)} events ({len(errors)} skipped), {len(labels)} labels "
          f"({labels.duplicates} duplicate, {unknown} not in the log) -> {d}")
    return dir_manifest(d)


def cmd_graph(args, run: Run) -> str:
    schema = load_schema_arg(args.schema)
    with open(run.input(args.events), "rb") as f:
        events = parse_events(f, schema)
    labels = read_labels_arg(run.input(args.labels))
    back = build_back_tree(tree_from_events(events, labels))
    out = out_file(args)
    write_tree(out, back)
    run.output(out)
    print(f"{len(back)} nodes, {len(back) - len(back.parent_of)} roots -> {out}")
    return file_manifest(out)


def cmd_trace(args, run: Run) -> str:
    back = read_tree(run.input(args.inp))
    cfg = TraceConfig(max_length=args.max_len, min_length=args.min_len, seed=args.seed,
                      per_event_start=not args.leaves_only)
    traces = [finalize_trace(t, cfg) for t in generate_traces(back, cfg)]
    out = out_file(args)
    write_traces(out, traces)
    run.output(out)
    print(f"{len(traces)} traces ({sum(t.label for t in traces)} malicious) -> {out}")
    return file_manifest(out)


def cmd_encode(args, run: Run) -> str:
    vocab = Vocabulary.from_schema(load_schema_arg(args.schema))
    traces = load_trace_file(run, args.inp)
    batch = encode_unmasked(traces, vocab, TemporalConfig(args.window))
    if args.mask_prob > 0:
        batch = apply_mask(batch, args.mask_prob, np.random.default_rng(args.seed))
    out = out_file(args)
    run.output(out, "".join(json.dumps(r) + "\n" for r in batch.to_records()))
    run.output(out + ".vocab.json", vocab.to_json() + "\n")
    print(f"{len(batch)} sequences of length {batch.seq_len} -> {out}")
    return file_manifest(out)


def _split_inputs(args, run: Run):
    traces = load_trace_file(run, args.data)
    if args.val:
        return traces, load_trace_file(run, args.val), []
    tr, va, te = split(traces, parse_ratios(args.split), seed=args.seed)
    return tr, va, te


def cmd_train(args, run: Run) -> str:
    vocab = Vocabulary.from_schema(load_schema_arg(args.schema))
    tr, va, te = _split_inputs(args, run)
    d = out_dir(args)
    if not args.val:
        for name, part in (("train", tr), ("val", va), ("test", te)):
            p = os.path.join(d, f"{name}.jsonl")
            write_traces(p, part)
            run.output(p)
    plan = SamplingPlan(args.benign_target if args.benign_target else "all", seed=args.seed)
    log_path = os.path.join(d, "run_log.csv")
    try:
        res = train(args.model, tr, vocab, train_config(args), va, plan,
                    temporal=not args.no_temporal, model_kwargs=model_kwargs(args))
    except TrainingDiverged as e:
        run.output(log_path, format_run_log(e.history))
        raise
    run.output(log_path, res.run_log_csv())
    ckpt = os.path.join(d, "model.ckpt")
    save_checkpoint(ckpt, res.model, vocab, step=res.steps,
                    extra={"window_seconds": args.window, "best_epoch": res.best_epoch})
    run.output(ckpt)
    best = f"{res.best_val.f1:.4f}" if res.best_val else "n/a"
    print(f"{args.model}: {res.steps} steps, best epoch {res.best_epoch}, val F1 {best} -> {d}")
    return dir_manifest(d)


def cmd_eval(args, run: Run) -> str:
    model, vocab, header = load_checkpoint(run.input(args.model_path))
    window = header.get("extra", {}).get("window_seconds", 2.0)
    batch = encode_unmasked(load_trace_file(run, args.data), vocab, TemporalConfig(window))
    rep, proba = evaluate(model, batch)
    d = out_dir(args)
    run.output(os.path.join(d, "metrics.csv"), format_metrics(rep))
    c = rep.counts
    run.output(os.path.join(d, "confusion.csv"),
               csv_text(["", "pred_malicious", "pred_benign"],
                        [["malicious", c.tp, c.fn], ["benign", c.fp, c.tn]]))
    run.output(os.path.join(d, "predictions.csv"),
               csv_text(["index", "label", "p_malicious"],
                        [[i, int(y), f"{p:.9f}"] for i, (y, p) in enumerate(zip(batch.labels, proba))]))
    print(f"precision {rep.precision:.4f} recall {rep.recall:.4f} f1 {rep.f1:.4f} "
          f"accuracy {rep.accuracy:.4f} -> {d}")
    return dir_manifest(d)


def cmd_eda(args, run: Run) -> str:
    schema = load_schema_arg(args.schema)
    if bool(args.tree) == bool(args.traces):
        raise UsageError("eda needs exactly one of --tree or --traces")
    traces = None
    if args.tree:
        pop = event_population(read_tree(run.input(args.tree)))
    else:
        traces = load_trace_file(run, args.traces)
        pop = trace_population(traces)
    d = out_dir(args)
    benign, malicious = object_action_matrix(pop, schema)
    run.output(os.path.join(d, "freq_benign.csv"), benign.to_csv())
    run.output(os.path.join(d, "freq_malicious.csv"), malicious.to_csv())
    run.output(os.path.join(d, "object_share.csv"), comparison_csv(benign, malicious, "object"))
    run.output(os.path.join(d, "action_share.csv"), comparison_csv(benign, malicious, "action"))
    edges = [float(x) for x in args.bins.split(",")]
    run.output(os.path.join(d, "delta_histogram.csv"), time_delta_histogram(pop, edges).to_csv())
    y = [o.label for o in pop]
    feats = {**{f"object:{k}": v for k, v in object_presence(pop, schema).items()},
             **{f"action:{k}": v for k, v in action_presence(pop, schema).items()}}
    run.output(os.path.join(d, "mi_events.csv"), mi_csv(mi_rows(feats, y, args.mi_base)))
    if traces is not None:
        rows = mi_rows(trace_contains(traces, schema, "pair"), [t.label for t in traces], args.mi_base)
        run.output(os.path.join(d, "mi_traces.csv"), mi_csv(rows))
    print(f"{len(pop)} observations -> {d}")
    return dir_manifest(d)


def cmd_sweep(args, run: Run) -> str:
    vocab = Vocabulary.from_schema(load_schema_arg(args.schema))
    tr, va, te = split(load_trace_file(run, args.data), parse_ratios(args.split), seed=args.seed)
    cfg = train_config(args)
    d = out_dir(args)
    if args.kind == "data-size":
        fracs = [float(x) for x in args.fractions.split(",")]
        lr = None if args.lr is None else {"transformer": args.lr, "lstm": args.lr}
        rows = data_size_sweep(tr, va, te, vocab, fracs, cfg, lr=lr)
        run.output(os.path.join(d, "data_size.csv"), format_sweep(rows))
    else:
        mults = [float(x) for x in args.multipliers.split(",")]
        rows = imbalance_sweep(tr, va, te, vocab, mults, cfg, kind=args.model)
        run.output(os.path.join(d, "imbalance.csv"), format_imbalance(rows))
    for r in rows:
        print({k: fmt(v) for k, v in r.items()})
    return dir_manifest(d)


def cmd_compare(args, run: Run) -> str:
    traces = load_trace_file(run, args.data)
    preds, reports = [], []
    for path in (args.model_a, args.model_b):
        model, vocab, header = load_checkpoint(run.input(path))
        window = header.get("extra", {}).get("window_seconds", 2.0)
        batch = encode_unmasked(traces, vocab, TemporalConfig(window))
        p, _ = predict(model, batch)
        preds.append(p)
        reports.append(evaluate(model, batch)[0])
    labels = np.array([t.label for t in traces])
    rep = cross_classification_report(preds[0], preds[1], labels)
    d = out_dir(args)
    cross = os.path.join(d, "cross.csv")
    write_cross_report(cross, rep, args.name_a, args.name_b)
    run.output(cross)
    rows = [[name, *[fmt(v) for v in r.row().values()]] for name, r in zip((args.name_a, args.name_b), reports)]
    run.output(os.path.join(d, "metrics.csv"), csv_text(["model", *reports[0].row()], rows))
    print(f"{args.name_a} right where {args.name_b} wrong: {rep['a_correct_b_wrong']}/{rep['b_wrong']}; "
          f"{args.name_b} right where {args.name_a} wrong: {rep['b_correct_a_wrong']}/{rep['a_wrong']}")
    return dir_manifest(d)


# -- parser ---------------------------------------------------------------------------

def _train_flags(p: argparse.ArgumentParser, model_choice: bool = True) -> None:
    if model_choice:
        p.add_argument("--model", choices=("transformer", "lstm"), default="transformer")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=None,
                   help="peak learning rate (default: 1e-3 transformer, 1e-2 lstm)")
    p.add_argument("--lr-schedule", choices=("linear", "constant"), default="linear")
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--mlm-weight", type=float, default=0.5, help="weight of the MLM term (transformer)")
    p.add_argument("--mask-prob", type=float, default=0.15)
    p.add_argument("--class-weights", default="1,1", help="benign,malicious loss weights")
    p.add_argument("--window", type=float, default=2.0, help="temporal slot width in seconds")
    p.add_argument("--split", default="0.8,0.1,0.1", help="train,val,test ratios")


def _model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--d-model", type=int, default=64, help="embedding width (both models)")
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--layers", type=int, default=2, help="transformer layers")
    p.add_argument("--d-ff", type=int, default=128)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--hidden", type=int, default=64, help="LSTM hidden size")
    p.add_argument("--lstm-layers", type=int, default=1)
    p.add_argument("--bidirectional", action="store_true")
    p.add_argument("--no-temporal", action="store_true", help="drop the temporal slot embedding")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="logshield", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.add_argument("--config", help="JSON file of flag defaults")
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "generate a synthetic event log with ground truth")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--hosts", type=int, default=3)
    p.add_argument("--benign-trees", type=int, default=430, help="benign process trees per host")
    p.add_argument("--malicious-chains", type=int, default=240, help="malicious chains per host")
    p.add_argument("--mu-benign", type=float, default=1.0)
    p.add_argument("--mu-malicious", type=float, default=8.0)
    p.add_argument("--camouflage", type=float, default=GeneratorConfig.camouflage,
                   help="chance a malicious event draws from the benign mix")

    p = add("ingest", cmd_ingest, "validate and normalize an event log and label file")
    p.add_argument("--events", required=True)
    p.add_argument("--labels")
    p.add_argument("--schema", default="optc")
    p.add_argument("--lenient", action="store_true", help="skip malformed lines instead of failing")
    p.add_argument("--out", required=True, help="output directory")

    p = add("graph", cmd_graph, "build the provenance tree of an event log")
    p.add_argument("--events", required=True)
    p.add_argument("--labels")
    p.add_argument("--schema", default="optc")
    p.add_argument("--out", required=True, help="tree JSONL file")

    p = add("trace", cmd_trace, "walk the provenance tree into fixed-length traces")
    p.add_argument("--in", dest="inp", required=True, help="tree JSONL file")
    p.add_argument("--max-len", type=int, default=32)
    p.add_argument("--min-len", type=int, default=2)
    p.add_argument("--leaves-only", action="store_true", help="start traces at leaves only")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="trace JSONL file")

    p = add("encode", cmd_encode, "encode traces into token ids, slots and MLM targets (debug dump)")
    p.add_argument("--in", dest="inp", required=True, help="trace JSONL file")
    p.add_argument("--schema", default="optc")
    p.add_argument("--window", type=float, default=2.0)
    p.add_argument("--mask-prob", type=float, default=0.15)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="encoded JSONL file")

    p = add("train", cmd_train, "train a transformer or LSTM classifier")
    p.add_argument("--data", required=True, help="trace JSONL file")
    p.add_argument("--val", help="validation traces; without it --data is split by --split")
    p.add_argument("--schema", default="optc")
    p.add_argument("--benign-target", type=int, help="downsample benign training traces to this count")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    _train_flags(p)
    _model_flags(p)

    p = add("eval", cmd_eval, "score a checkpoint on a trace file")
    p.add_argument("--model", dest="model_path", required=True, help="checkpoint file")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output directory")

    p = add("eda", cmd_eda, "frequency, time-delta and mutual-information tables")
    p.add_argument("--tree", help="tree JSONL (per-event statistics)")
    p.add_argument("--traces", help="trace JSONL (per-trace statistics)")
    p.add_argument("--schema", default="optc")
    p.add_argument("--bins", default="0,0.5,1,2,4,8,16,32,64,1e9", help="time-delta bin edges")
    p.add_argument("--mi-base", type=float, default=2.0)
    p.add_argument("--out", required=True, help="output directory")

    p = add("sweep", cmd_sweep, "data-size or benign-count sweep")
    p.add_argument("--kind", choices=("data-size", "imbalance"), required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--schema", default="optc")
    p.add_argument("--fractions", default="0.1,0.25,0.5,1.0")
    p.add_argument("--multipliers", default="1,2,4,8", help="benign count as multiples of the malicious count")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    _train_flags(p)

    p = add("compare", cmd_compare, "cross-tabulate where two checkpoints disagree")
    p.add_argument("--model-a", required=True)
    p.add_argument("--model-b", required=True)
    p.add_argument("--name-a", default="logshield")
    p.add_argument("--name-b", default="lstm")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output directory")
    return ap


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Parse ``argv``; a ``--config`` JSON file supplies defaults that flags override."""
    choices = parser._subparsers._group_actions[0].choices
    command = next((a for a in argv if a in choices), None)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if command is None or not known.config:
        return parser.parse_args(argv)
    with open(known.config, encoding="utf-8") as f:
        try:
            cfg = json.load(f)
        except json.JSONDecodeError as e:
            raise UsageError(f"{known.config}: invalid JSON ({e.msg})") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"{known.config}: expected a JSON object of flag values")
    sub = choices[command]
    actions = {a.dest: a for a in sub._actions}
    aliases = {k: k for k in actions}
    for a in sub._actions:
        for opt in a.option_strings:
            aliases[opt.lstrip("-").replace("-", "_")] = a.dest
    defaults = {}
    for key, value in cfg.items():
        dest = aliases.get(key.replace("-", "_"))
        if dest is None or dest in ("config", "help", "func"):
            raise UsageError(f"{known.config}: unknown setting {key!r} for '{command}'")
        defaults[dest] = value
        actions[dest].required = False
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        run = Run(args, argv)
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            manifest = args.func(args, run)
        run.finish(manifest)
        return 0
    except SystemExit as e:          # argparse usage errors
        return int(e.code or 0)
    except UsageError as e:
        print(f"logshield: error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        name = e.filename or ""
        print(f"logshield: error: {e.strerror or e}{': ' + str(name) if name else ''}", file=sys.stderr)
        return 1
    except CONTRACT_ERRORS as e:
        print(f"logshield: error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
