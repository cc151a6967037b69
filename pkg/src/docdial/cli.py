"""Command-line entry point: ``docdial <subcommand> ...``.

Every subcommand prints a JSON summary on stdout. Input validation and parse
errors exit with status 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import bench as bench_mod
from .augment import augment_from_kb
from .detection import DetectionConfig, detect
from .generation import GenerationConfig, GenerationMode, NoisyChannelWeights, RagConfig, StyleToken, generate_response
from .kb import (
    Dialog,
    Label,
    ParseError,
    ValidationError,
    _read_json,
    kb_stats,
    labels_from_json,
    load_annotations,
    load_knowledge,
    load_labels,
    load_logs,
    logs_to_json,
    validate,
    write_json,
    write_submission,
)
from .metrics import evaluate, precision_recall_f1
from .pipeline import Pipeline, make_selector, run_pipeline
from .scoring import (
    FileBackedScorer,
    HashedBowEmbedder,
    LexicalChannelScorer,
    LexicalDetector,
    LexicalOverlapScorer,
    Metric,
    NbestStrategy,
    SmoothedBigramModel,
)
from .selection import (
    LOSS_METRIC,
    BiEncoderIndex,
    HierarchicalConfig,
    HierarchyVariant,
    LossConfig,
    LossKind,
    OptimConfig,
    SelectionResult,
    build_index,
    train_biencoder,
)
from .textnorm import NormalizationConfig, load_abbreviations

log = logging.getLogger("docdial")

EXIT_VALIDATION = 2


def load_norm_config(path: str | None) -> NormalizationConfig:
    """``.tsv`` files are abbreviation tables; anything else is a JSON object of config fields.

    The JSON form may carry an ``abbreviations`` object or an ``abbreviations_tsv`` path.
    """
    if path is None:
        return NormalizationConfig()
    p = Path(path)
    if p.suffix == ".tsv":
        return NormalizationConfig(abbreviation_map=load_abbreviations(p))
    try:
        obj = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(f"{p}: {e}") from e
    if not isinstance(obj, dict):
        raise ValidationError(f"{p}: normalization config must be a JSON object")
    fields = {k: obj[k] for k in ("lowercase", "strip_punctuation", "verbalize_numbers", "expand_abbreviations") if k in obj}
    if "abbreviations_tsv" in obj:
        fields["abbreviation_map"] = load_abbreviations(p.parent / obj["abbreviations_tsv"])
    elif "abbreviations" in obj:
        fields["abbreviation_map"] = dict(obj["abbreviations"])
    try:
        return NormalizationConfig(**fields)
    except ValueError as e:
        raise ValidationError(f"{p}: {e}") from e


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _detection_config(args, norm: NormalizationConfig) -> DetectionConfig:
    return DetectionConfig(threshold=args.threshold, nbest_strategy=NbestStrategy(args.nbest), normalization=norm)


def _embedder(args, norm: NormalizationConfig) -> HashedBowEmbedder:
    if getattr(args, "embedder", None):
        return HashedBowEmbedder.load(args.embedder, norm)
    return HashedBowEmbedder(seed=args.seed, config=norm)


def _hier_config(args) -> HierarchicalConfig:
    return HierarchicalConfig(HierarchyVariant(args.variant), args.beam_threshold, args.gamma)


def _selector_for(args, kb, norm):
    strategy = args.strategy
    if strategy == "biencoder":
        emb = _embedder(args, norm)
        metric = Metric(args.metric)
        index = BiEncoderIndex.load(args.index) if getattr(args, "index", None) else build_index(kb, emb, metric)
        select = make_selector("biencoder", kb, embedder=emb, index=index)
        return lambda dialog: select(list(dialog.turns))
    scores = getattr(args, "scores", None)
    if scores:
        table = FileBackedScorer.load(scores)
        return lambda dialog: make_selector(strategy, kb, scorer=table.for_context(dialog.id), config=_hier_config(args))(
            list(dialog.turns)
        )
    select = make_selector(strategy, kb, scorer=LexicalOverlapScorer(norm), config=_hier_config(args))
    return lambda dialog: select(list(dialog.turns))


def _models(kb, dialogs: Sequence[Dialog]) -> SmoothedBigramModel:
    texts = [doc.text for doc in kb] + [t.text for d in dialogs for t in d.turns]
    return SmoothedBigramModel.from_texts(texts)


def _generation_config(args) -> GenerationConfig:
    return GenerationConfig(
        mode=GenerationMode(args.mode),
        beam_size=args.beam,
        max_len=args.max_len,
        rag=RagConfig(n=args.rag_n),
        noisy_channel=NoisyChannelWeights(lm_weight=args.lambda1, channel_weight=args.lambda2, k_best=args.k_best),
        style=StyleToken(f"<{args.style}>") if args.style else None,
    )


# -- subcommands ---------------------------------------------------------------------


def cmd_ingest_validate(args) -> int:
    kb = load_knowledge(args.knowledge)
    dialogs = load_logs(args.logs) if args.logs else []
    labels = load_labels(args.labels) if args.labels else None
    validate(kb, dialogs, labels)
    _emit({"valid": True, "stats": kb_stats(kb, dialogs, labels or ()).to_json()})
    return 0


def cmd_detect(args) -> int:
    kb = load_knowledge(args.knowledge)
    dialogs = load_logs(args.logs)
    norm = load_norm_config(args.norm_config)
    config = _detection_config(args, norm)
    detector = LexicalDetector(kb, norm)
    out = []
    for d in dialogs:
        flag, score = detect(d, detector, config)
        out.append(Label(flag, score=score))
    write_submission(out, args.out)
    summary = {"dialogs": len(out), "positive": sum(lbl.target for lbl in out)}
    if args.labels:
        ref = load_labels(args.labels)
        validate(kb, dialogs, ref)
        tp = sum(p.target and r.target for p, r in zip(out, ref))
        fp = sum(p.target and not r.target for p, r in zip(out, ref))
        fn = sum(not p.target and r.target for p, r in zip(out, ref))
        summary["precision"], summary["recall"], summary["f1"] = precision_recall_f1(tp, fp, fn)
    _emit(summary)
    return 0


def cmd_select(args) -> int:
    kb = load_knowledge(args.knowledge)
    dialogs = load_logs(args.logs)
    norm = load_norm_config(args.norm_config)
    targets = [lbl.target for lbl in load_labels(args.targets)] if args.targets else [True] * len(dialogs)
    if len(targets) != len(dialogs):
        raise ValidationError(f"{len(targets)} target flags for {len(dialogs)} dialogs")
    select = _selector_for(args, kb, norm)
    entries = []
    for d, is_target in zip(dialogs, targets):
        if not is_target:
            entries.append({"target": False})
            continue
        try:
            result: SelectionResult = select(d)
        except KeyError as e:
            raise ValidationError(f"dialog {d.id}: {e.args[0]}") from None
        entries.append(
            {
                "target": True,
                "knowledge": [k.to_json() for k in result.keys],
                "knowledge_scores": [s for _, s in result.ranked],
            }
        )
    write_json(entries, args.out)
    _emit({"dialogs": len(entries), "selected": sum(e["target"] for e in entries)})
    return 0


def _selection_from_label(label: Label, scores: Sequence[float] | None) -> SelectionResult | None:
    """Rebuild a ranking from a labels entry; without stored scores, ranks map to n, n-1, ..., 1."""
    n = len(label.knowledge)
    if not n:
        return None
    if scores is None:
        scores = [float(n - i) for i in range(n)]
    elif len(scores) != n:
        raise ValidationError("knowledge_scores and knowledge differ in length")
    return SelectionResult(list(zip(label.knowledge, map(float, scores))))


def cmd_generate(args) -> int:
    kb = load_knowledge(args.knowledge)
    dialogs = load_logs(args.logs)
    raw_entries = _read_json(args.selection)
    selections = labels_from_json(raw_entries)
    validate(kb, dialogs, selections)
    raw = {id(sel): entry.get("knowledge_scores") for sel, entry in zip(selections, raw_entries)}
    model = _models(kb, dialogs)
    config = _generation_config(args)
    out = []
    for d, sel in zip(dialogs, selections):
        if not sel.target:
            out.append(Label(False))
            continue
        result = _selection_from_label(sel, raw.get(id(sel)))
        response = generate_response(list(d.turns), result, kb, model, config, model, LexicalChannelScorer())
        out.append(Label(True, sel.knowledge, response))
    write_submission(out, args.out)
    _emit({"dialogs": len(out), "generated": sum(lbl.target for lbl in out)})
    return 0


def cmd_pipeline(args) -> int:
    kb = load_knowledge(args.knowledge)
    dialogs = load_logs(args.logs)
    norm = load_norm_config(args.norm_config)
    model = _models(kb, dialogs)
    config = _generation_config(args)
    if args.scores:
        raise ValidationError("--scores is only supported by the select subcommand")
    select = _selector_for(args, kb, norm)
    pipeline = Pipeline(
        kb=kb,
        detector=LexicalDetector(kb, norm),
        selector=lambda ctx: select(Dialog("ctx", tuple(ctx))),
        generator=lambda ctx, sel: generate_response(ctx, sel, kb, model, config, model, LexicalChannelScorer()),
        detection=_detection_config(args, norm),
    )
    labels = run_pipeline(dialogs, pipeline)
    write_submission(labels, args.out)
    _emit({"dialogs": len(labels), "positive": sum(lbl.target for lbl in labels)})
    return 0


def cmd_evaluate(args) -> int:
    pred = load_labels(args.pred)
    ref = load_labels(args.ref)
    kb = load_knowledge(args.knowledge) if args.knowledge else None
    report = evaluate(pred, ref, kb).to_json()
    if args.report:
        write_json(report, args.report)
    _emit(report)
    return 0


def cmd_train_biencoder(args) -> int:
    kb = load_knowledge(args.knowledge)
    dialogs = load_logs(args.logs)
    labels = load_labels(args.labels)
    validate(kb, dialogs, labels)
    norm = load_norm_config(args.norm_config)
    pairs = [(list(d.turns), lbl.knowledge[0]) for d, lbl in zip(dialogs, labels) if lbl.target and lbl.knowledge]
    loss = LossConfig(
        kind=LossKind(args.loss), margin=args.margin, temperature=args.temperature, batch_size=args.batch_size
    )
    init = HashedBowEmbedder(dim=args.dim, buckets=args.buckets, seed=args.seed, config=norm)
    emb, training = train_biencoder(pairs, kb, loss, OptimConfig(lr=args.lr, epochs=args.epochs, seed=args.seed), init)
    emb.save(args.out)
    summary = {"pairs": len(pairs), "final_loss": training.epoch_losses[-1], "embedder": str(args.out)}
    if args.index_out:
        build_index(kb, emb, LOSS_METRIC[loss.kind]).save(args.index_out)
        summary["index"] = str(args.index_out)
    _emit(summary)
    return 0


def cmd_augment(args) -> int:
    kb = load_knowledge(args.knowledge)
    dialogs = load_logs(args.logs)
    annotations = load_annotations(args.annotations)
    samples, skipped = augment_from_kb(kb, dialogs, annotations, args.seed, args.samples_per_doc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(logs_to_json([s.dialog for s in samples]), out / "logs.json")
    write_submission([s.label for s in samples], out / "labels.json")
    _emit({"samples": len(samples), "skipped_documents": skipped, "out": str(out)})
    return 0


def cmd_bench(args) -> int:
    if args.knowledge:
        kb = load_knowledge(args.knowledge)
    else:
        try:
            d, e, k = (int(x) for x in args.synthetic.lower().split("x"))
        except ValueError:
            raise ValidationError(f"--synthetic expects DxExK, got {args.synthetic!r}") from None
        kb = bench_mod.synthetic_kb(d, e, k)
    if args.logs:
        contexts = [list(d.turns) for d in load_logs(args.logs)]
    else:
        # one probe turn per document question
        from .kb import Speaker, Turn

        contexts = [[Turn(Speaker.USER, doc.question)] for doc in list(kb)[: args.turns]]
    norm = load_norm_config(args.norm_config)
    report = bench_mod.bench_selection(
        kb,
        contexts,
        args.strategies,
        scorer=LexicalOverlapScorer(norm),
        embedder=HashedBowEmbedder(seed=args.seed, config=norm),
        threshold=args.beam_threshold,
        gamma=args.gamma,
        metric=Metric(args.metric),
        workers=args.parallel,
    )
    out = report.to_json()
    if args.parallel > 1:
        out["timing_mode"] = "throughput"
    if args.out:
        write_json(out, args.out)
    _emit(out)
    return 0


# -- parser ------------------------------------------------------------------------------


def _add_selection_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--strategy", choices=["flat", "greedy", "beam", "biencoder"], default="beam")
    p.add_argument("--variant", choices=[v.value for v in HierarchyVariant], default="joint")
    p.add_argument("--beam-threshold", type=float, default=0.5, help="entity survival ratio t")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--embedder", help="trained embedder .npz (bi-encoder)")
    p.add_argument("--index", help="prebuilt index file (bi-encoder)")
    p.add_argument("--metric", choices=[m.value for m in Metric], default="cosine")
    p.add_argument("--scores", help="JSON lines of precomputed relevance scores")


def _add_detection_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--nbest", choices=[s.value for s in NbestStrategy], default="best")


def _add_generation_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=[m.value for m in GenerationMode], default="direct")
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--max-len", type=int, default=40)
    p.add_argument("--rag-n", type=int, default=5)
    p.add_argument("--lambda1", type=float, default=0.5, help="LM weight")
    p.add_argument("--lambda2", type=float, default=0.5, help="channel weight")
    p.add_argument("--k-best", type=int, default=10)
    p.add_argument("--style", choices=["written", "spoken"])


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--norm-config", help="abbreviation .tsv or JSON normalization config")
    common.add_argument("--format", choices=["json"], default="json")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="docdial", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, parents=[common])
        p.set_defaults(func=func)
        return p

    p = add("ingest-validate", cmd_ingest_validate, "validate data files and print statistics")
    p.add_argument("--knowledge", required=True)
    p.add_argument("--logs")
    p.add_argument("--labels")

    p = add("detect", cmd_detect, "knowledge-seeking turn detection")
    p.add_argument("--knowledge", required=True)
    p.add_argument("--logs", required=True)
    p.add_argument("--labels", help="reference labels for a P/R/F1 summary")
    p.add_argument("--out", required=True)
    _add_detection_args(p)

    p = add("select", cmd_select, "knowledge selection")
    p.add_argument("--knowledge", required=True)
    p.add_argument("--logs", required=True)
    p.add_argument("--targets", help="labels file whose target flags pick the turns to rank")
    p.add_argument("--out", required=True)
    _add_selection_args(p)

    p = add("generate", cmd_generate, "response generation from a selection file")
    p.add_argument("--knowledge", required=True)
    p.add_argument("--logs", required=True)
    p.add_argument("--selection", required=True, help="labels-format file with ranked knowledge")
    p.add_argument("--out", required=True)
    _add_generation_args(p)

    p = add("pipeline", cmd_pipeline, "detect, select and generate in one pass")
    p.add_argument("--knowledge", required=True)
    p.add_argument("--logs", required=True)
    p.add_argument("--out", required=True)
    _add_detection_args(p)
    _add_selection_args(p)
    _add_generation_args(p)

    p = add("evaluate", cmd_evaluate, "score a submission")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--knowledge", help="enables factuality metrics")
    p.add_argument("--report")

    p = add("train-biencoder", cmd_train_biencoder, "train the hashed bag-of-words bi-encoder")
    p.add_argument("--knowledge", required=True)
    p.add_argument("--logs", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True, help="embedder .npz")
    p.add_argument("--index-out")
    p.add_argument("--loss", choices=[k.value for k in LossKind], default="ntxent")
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--temperature", type=float, default=20.0)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--buckets", type=int, default=512)

    p = add("augment", cmd_augment, "synthesize knowledge-seeking turns from the knowledge base")
    p.add_argument("--knowledge", required=True)
    p.add_argument("--logs", required=True)
    p.add_argument("--annotations", required=True, help="JSON lines {dialog_id, domain, entity_name}")
    p.add_argument("--samples-per-doc", type=int, default=1)
    p.add_argument("--out", required=True, help="directory for logs.json and labels.json")

    p = add("bench", cmd_bench, "model-call and latency benchmark of selection strategies")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--knowledge")
    src.add_argument("--synthetic", help="DxExK synthetic knowledge base, e.g. 4x10x5")
    p.add_argument("--logs", help="contexts to benchmark; defaults to document questions")
    p.add_argument("--turns", type=int, default=20)
    p.add_argument("--strategies", nargs="+", default=list(bench_mod.DEFAULT_STRATEGIES), choices=sorted(bench_mod.RUNNERS))
    p.add_argument("--beam-threshold", type=float, default=0.5)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--metric", choices=[m.value for m in Metric], default="cosine")
    p.add_argument("--parallel", type=int, default=1, help="worker threads; timings become throughput numbers")
    p.add_argument("--out")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValidationError, ParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
