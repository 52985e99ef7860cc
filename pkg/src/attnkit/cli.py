"""Command-line reports over attention extracts.

Every subcommand reads inputs named by flags, writes CSV (plus one SVG for
the cluster scatter) into --out, and records a manifest with the exact
config and input digests. No timestamps anywhere: the same inputs, flags and
seed produce byte-identical outputs.

Exit codes: 0 success, 1 validation or data failure (one JSON error line on
stdout), 2 usage errors (argparse).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cluster import head_distances, mds_embed
from .corpora import (ROOT, load_coref_corpus, load_dep_corpus, load_embeddings,
                      save_dep_corpus)
from .errors import ToolkitError
from .headprobe import (ALL_RELATIONS, DEP_TO_HEAD, DIRECTIONS, coref_baselines,
                        eval_coref, eval_dependency, offset_baseline)
from .interchange import (CATEGORIES, load_extract, load_gradient_report,
                          save_extract)
from .probeclf import (TrainConfig, build_batches, eval_uas, load_probe,
                       probe_kind, right_branching, save_probe, train_probe)
from .surface import (aggregate_gradients, category_stats, cls_entropy,
                      head_entropy, offset_stats, sep_breakdown)
from .synth import Behavior, SynthSpec, generate, random_sentences

F = "{:.6f}".format
F9 = "{:.9f}".format


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_manifest(out: Path, command: str, args: argparse.Namespace,
                    inputs: list[Path | None], metrics: dict | None = None) -> None:
    config = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = {
        "command": command,
        "version": __version__,
        "args": config,
        "inputs": {str(p): _sha256(p) for p in inputs if p is not None},
    }
    if metrics:
        manifest["metrics"] = metrics
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


#
# surface
#

def cmd_surface(args) -> int:
    extract = load_extract(args.extract)
    out = _out_dir(args)
    rows = []
    for offset in range(-args.offset_range, args.offset_range + 1):
        if offset == 0:
            continue
        try:
            share = offset_stats(extract, offset)
        except ValueError:
            continue  # no segment long enough for this offset
        for hid in extract.head_ids():
            rows.append([offset, hid.layer, hid.head, F(share[hid.layer, hid.head])])
    _write_csv(out / "offsets.csv", ["offset", "layer", "head", "share"], rows)

    shares = {cat: category_stats(extract, cat) for cat in CATEGORIES}
    rows = [[hid.layer, hid.head] + [F(shares[cat][hid.layer, hid.head]) for cat in CATEGORIES]
            for hid in extract.head_ids()]
    _write_csv(out / "categories.csv",
               ["layer", "head"] + [cat.lower() for cat in CATEGORIES], rows)

    from_sep, from_other = sep_breakdown(extract)
    rows = [[hid.layer, hid.head, F(from_sep[hid.layer, hid.head]),
             F(from_other[hid.layer, hid.head])] for hid in extract.head_ids()]
    _write_csv(out / "sep_sources.csv",
               ["layer", "head", "sep_to_sep", "other_to_sep"], rows)

    entropy = head_entropy(extract)
    rows = [[hid.layer, hid.head, F(entropy[hid.layer, hid.head])]
            for hid in extract.head_ids()]
    _write_csv(out / "entropy.csv", ["layer", "head", "mean_entropy"], rows)
    try:
        per_layer = cls_entropy(extract)
        _write_csv(out / "cls_entropy.csv", ["layer", "mean_entropy"],
                   [[layer, F(val)] for layer, val in enumerate(per_layer)])
    except ValueError:
        pass  # extract has no [CLS] rows to report on

    _write_manifest(out, "surface", args, [Path(args.extract)])
    return 0


def cmd_grad_report(args) -> int:
    report = load_gradient_report(args.report)
    out = _out_dir(args)
    rows = [[layer, F(sep), F(pc), F(other)]
            for layer, sep, pc, other in aggregate_gradients(report)]
    _write_csv(out / "grad.csv", ["layer", "sep", "period_comma", "other"], rows)
    _write_manifest(out, "grad-report", args, [Path(args.report)])
    return 0


#
# head probing
#

def cmd_probe_heads(args) -> int:
    extract = load_extract(args.extract)
    sentences = load_dep_corpus(args.dep_corpus)
    out = _out_dir(args)
    # One corpus pass per head and direction collects every relation at once.
    evals = {}
    for hid in extract.head_ids():
        for direction in DIRECTIONS:
            evals[hid, direction] = eval_dependency(
                extract, sentences, hid, direction,
                clitic_equivalence=args.clitic_equivalence)

    def best_for(relation):
        scored = []
        for (hid, direction), ev in evals.items():
            score = (ev.overall if relation == ALL_RELATIONS
                     else ev.per_relation.get(relation))
            if score is not None and (relation != ALL_RELATIONS or direction == DEP_TO_HEAD):
                scored.append((-score.accuracy, hid.flat(extract.n_heads),
                               DIRECTIONS.index(direction), score))
        return min(scored)[-1]

    relations = sorted({rel for sent in sentences for rel, gold
                        in zip(sent.relation, sent.gold_head) if gold != ROOT})
    rows = []
    for relation in [ALL_RELATIONS] + relations:
        score = best_for(relation)
        base = offset_baseline(sentences, relation, scan_range=args.offset_range)
        rows.append([relation, score.head.layer, score.head.head, score.direction,
                     F(score.accuracy), score.support,
                     base.best_offset, F(base.accuracy)])
    _write_csv(out / "relations.csv",
               ["relation", "layer", "head", "direction", "accuracy", "support",
                "baseline_offset", "baseline_accuracy"], rows)
    _write_manifest(out, "probe-heads", args,
                    [Path(args.extract), Path(args.dep_corpus)])
    return 0


def cmd_probe_coref(args) -> int:
    extract = load_extract(args.extract)
    docs = load_coref_corpus(args.coref_corpus)
    out = _out_dir(args)
    results = dict(coref_baselines(docs))
    best_key, best = None, None
    for hid in extract.head_ids():
        ev = eval_coref(extract, docs, hid, all_words=args.all_words)
        key = (-ev.accuracy, hid.flat(extract.n_heads))
        if best_key is None or key < best_key:
            best_key, best = key, (hid, ev)
    hid, ev = best
    results[f"attention-{hid.display()}"] = ev
    types = ["PRONOUN", "PROPER", "NOMINAL"]
    rows = [[name, F(ev.accuracy)] + [F(ev.type_accuracy(t)) for t in types]
            + [ev.support] for name, ev in results.items()]
    _write_csv(out / "coref.csv", ["method", "all"] + [t.lower() for t in types]
               + ["support"], rows)
    _write_manifest(out, "probe-coref", args,
                    [Path(args.extract), Path(args.coref_corpus)])
    return 0


#
# trained probes
#

def _probe_inputs(args):
    extract = load_extract(args.extract) if args.extract else None
    sentences = load_dep_corpus(args.dep_corpus)
    embeddings = load_embeddings(args.embeddings) if args.embeddings else None
    batches = build_batches(extract, sentences, embeddings,
                            root_to_cls=args.keep_special)
    return sentences, batches


def cmd_train_probe(args) -> int:
    _, batches = _probe_inputs(args)
    out = _out_dir(args)
    config = TrainConfig(learning_rate=args.lr, epochs=args.epochs, l2=args.l2,
                         seed=args.seed, adaptive=not args.full_batch)
    probe, losses = train_probe(args.kind, batches, config)
    save_probe(probe, out / "probe.bin")
    _write_csv(out / "training.csv", ["epoch", "loss"],
               [[epoch, F9(loss)] for epoch, loss in enumerate(losses)])
    metrics = {"final_loss": losses[-1] if losses else None}
    _write_manifest(out, "train-probe", args,
                    [Path(p) for p in (args.extract, args.dep_corpus, args.embeddings) if p],
                    metrics)
    return 0


def cmd_eval_probe(args) -> int:
    sentences, batches = _probe_inputs(args)
    probe = load_probe(args.checkpoint)
    out = _out_dir(args)
    rows = [[probe_kind(probe), F(eval_uas(probe, batches))],
            ["right_branching", F(right_branching(sentences))]]
    _write_csv(out / "uas.csv", ["model", "uas"], rows)
    _write_manifest(out, "eval-probe", args,
                    [Path(p) for p in (args.extract, args.dep_corpus,
                                       args.embeddings, args.checkpoint) if p])
    return 0


#
# clustering
#

def _svg_scatter(points: np.ndarray, layers: list[int], labels: list[str],
                 tags: list[str], size: int = 640, margin: int = 60) -> str:
    n_layers = max(layers) + 1 if layers else 1
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)

    def place(p):
        x = margin + (p[0] - lo[0]) / span[0] * (size - 2 * margin)
        y = size - margin - (p[1] - lo[1]) / span[1] * (size - 2 * margin)
        return x, y

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">',
             f'<rect width="{size}" height="{size}" fill="white"/>']
    for layer in range(n_layers):
        hue = 360 * layer // n_layers
        parts.append(f'<text x="{margin + 80 * layer}" y="24" '
                     f'fill="hsl({hue},70%,40%)" font-size="13">layer {layer + 1}</text>')
    for point, layer, label, tag in zip(points, layers, labels, tags):
        x, y = place(point)
        hue = 360 * layer // n_layers
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="6" '
                     f'fill="hsl({hue},70%,45%)"/>')
        text = f"{label} {tag}".strip()
        parts.append(f'<text x="{x + 8:.2f}" y="{y + 4:.2f}" font-size="11">{text}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_cluster(args) -> int:
    extract = load_extract(args.extract)
    out = _out_dir(args)
    distances = head_distances(extract, raw_sum=args.raw_sum_distances)
    embedding = mds_embed(distances)
    ids = distances.head_ids
    names = [hid.display() for hid in ids]
    _write_csv(out / "distances.csv", ["head"] + names,
               [[name] + [F9(v) for v in row]
                for name, row in zip(names, distances.d)])
    tags = [t.strip() for t in args.tags.split(",")] if args.tags else []
    tags += [""] * (len(ids) - len(tags))
    rows = [[name, hid.layer, hid.head, F(x), F(y), tag]
            for name, hid, (x, y), tag
            in zip(names, ids, embedding.coordinates, tags)]
    _write_csv(out / "embedding.csv", ["name", "layer", "head", "x", "y", "tag"], rows)
    svg = _svg_scatter(embedding.coordinates, [hid.layer for hid in ids], names, tags)
    (out / "scatter.svg").write_text(svg)
    _write_manifest(out, "cluster", args, [Path(args.extract)],
                    {"normalized_stress": embedding.stress,
                     "iterations": len(embedding.stress_history) - 1})
    return 0


#
# fixtures and validation
#

def cmd_synth(args) -> int:
    behaviors = [Behavior.parse(text) for text in args.behaviors.split(",")]
    spec = SynthSpec(args.layers, args.heads, behaviors, seed=args.seed,
                     split_prob=args.split_prob, n_sentences=args.sentences)
    if args.dep_corpus:
        sentences = load_dep_corpus(args.dep_corpus)
    else:
        sentences = random_sentences(args.sentences, args.seed)
    extract = generate(spec, sentences)
    out = _out_dir(args)
    save_extract(extract, out / "extract.atnx")
    save_dep_corpus(sentences, out / "corpus.conll")
    _write_manifest(out, "synth", args,
                    [Path(args.dep_corpus)] if args.dep_corpus else [])
    return 0


def cmd_validate(args) -> int:
    extract = load_extract(args.extract)  # load runs the full validation
    print(json.dumps({"ok": True, "n_layers": extract.n_layers,
                      "n_heads": extract.n_heads,
                      "n_segments": len(extract.segments)}))
    if args.out:
        out = _out_dir(args)
        _write_manifest(out, "validate", args, [Path(args.extract)])
    return 0


#
# parser
#

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="attnkit",
        description="Analysis reports over serialized transformer attention maps.")
    parser.add_argument("--version", action="version", version=f"attnkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.set_defaults(func=func)
        return sp

    sp = command("surface", cmd_surface,
                 "offset, category and entropy statistics per head")
    sp.add_argument("--extract", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--offset-range", type=int, default=2)

    sp = command("grad-report", cmd_grad_report,
                 "aggregate a gradient-importance report to CSV")
    sp.add_argument("--report", required=True)
    sp.add_argument("--out", required=True)

    sp = command("probe-heads", cmd_probe_heads,
                 "best head per dependency relation vs fixed-offset baseline")
    sp.add_argument("--extract", required=True)
    sp.add_argument("--dep-corpus", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--offset-range", type=int, default=10)
    sp.add_argument("--clitic-equivalence", action="store_true")

    sp = command("probe-coref", cmd_probe_coref,
                 "antecedent selection per head vs string-match baselines")
    sp.add_argument("--extract", required=True)
    sp.add_argument("--coref-corpus", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--all-words", action="store_true")

    for name, func, help_text in (
            ("train-probe", cmd_train_probe, "fit an attention-based parsing probe"),
            ("eval-probe", cmd_eval_probe, "score a trained probe checkpoint")):
        sp = command(name, func, help_text)
        sp.add_argument("--extract")
        sp.add_argument("--dep-corpus", required=True)
        sp.add_argument("--embeddings")
        sp.add_argument("--keep-special", action="store_true",
                        help="keep delimiter columns; root words score against [CLS]")
        if name == "train-probe":
            sp.add_argument("--kind", choices=("attn", "attn_words", "distance_words"),
                            default="attn")
            sp.add_argument("--epochs", type=int, default=20)
            sp.add_argument("--lr", type=float, default=0.1)
            sp.add_argument("--l2", type=float, default=1e-5)
            sp.add_argument("--seed", type=int, default=0)
            sp.add_argument("--full-batch", action="store_true",
                            help="monotone full-batch descent instead of adaptive steps")
        else:
            sp.add_argument("--checkpoint", required=True)
        sp.add_argument("--out", required=True)

    sp = command("cluster", cmd_cluster,
                 "head distance matrix and 2-D embedding")
    sp.add_argument("--extract", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--raw-sum-distances", action="store_true")
    sp.add_argument("--tags", help="comma-separated annotations, one per head")

    sp = command("synth", cmd_synth,
                 "generate a synthetic extract plus matching corpus")
    sp.add_argument("--behaviors", required=True,
                    help='e.g. "uniform,offset:+1,gold:0.9,sep_sink,noise:7"')
    sp.add_argument("--layers", type=int, required=True)
    sp.add_argument("--heads", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--split-prob", type=float, default=0.0)
    sp.add_argument("--sentences", type=int, default=100)
    sp.add_argument("--dep-corpus")
    sp.add_argument("--out", required=True)

    sp = command("validate", cmd_validate, "check an extract file and report shape")
    sp.add_argument("--extract", required=True)
    sp.add_argument("--out")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ToolkitError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}))
        return 1
    except (OSError, ValueError, RuntimeError) as exc:
        print(json.dumps({"error": "error", "message": str(exc)}))
        return 1


if __name__ == "__main__":
    sys.exit(main())
