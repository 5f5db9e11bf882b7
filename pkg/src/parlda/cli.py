"""Command-line experiment driver.

Every command takes its parameters from an optional JSON config file plus
flag overrides (flags win), validates them, writes the fully resolved
config next to its outputs, and is deterministic given that file. Data
goes to files in the output directory; progress goes to stderr.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import html
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import evaluation, gibbs, synth
from .corpus import (
    Corpus,
    TokenizerConfig,
    ingest_jsonl,
    ingest_plaintext,
    paragraphs_as_text,
    write_jsonl,
)
from .gibbs import Hyperparams, Schedule

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid configuration or flag usage; maps to exit code 2."""


GEN_DEFAULTS = {
    "vocab_size": 500,
    "n_general_topics": 3,
    "n_specific_topics": 8,
    "n_documents": 400,
    "mean_paragraphs_per_doc": 10.0,
    "mean_words_per_paragraph": 30.0,
    "alpha_general": 2.0,
    "alpha_specific": 0.1,
    "beta_general": 0.1,
    "beta_specific": 0.1,
    "gamma": 1.0,
    "word_prob_mode": "uniform",
    "specific_word_prob": 0.5,
    "specific_word_low": 0.2,
    "specific_word_high": 0.8,
    "test_fraction": 0.25,
    "seed": 0,
}

TRAIN_DEFAULTS = {
    "corpus": None,
    "model_type": "parlda",
    "n_general_topics": 3,
    "n_specific_topics": 8,
    "alpha_general": 2.0,
    "alpha_specific": 0.1,
    "beta_general": 0.1,
    "beta_specific": 0.1,
    "gamma": 1.0,
    "gamma_words": None,
    "specific_word_prob": 0.5,
    "x_prior": "document",
    "iterations": 500,
    "burn_in": 300,
    "sample_lag": 10,
    "candidate_chains": gibbs.DEFAULT_CANDIDATE_CHAINS,
    "debug_recount": False,
    "chains": 1,
    "seed": 0,
}

INFER_DEFAULTS = {
    "model": None,
    "corpus": None,
    "iterations": 200,
    "burn_in": 100,
    "sample_lag": 5,
    "specific_word_prob": None,
    "x_prior": None,
    "unknown_term_limit": 0.1,
    "seed": 0,
}

EVAL_DEFAULTS = {
    "model": None,
    "truth": None,
    "test_corpus": None,
    "results": None,
    "reference": None,
    "top_n": 10,
    "overlap_min": 5,
    "matching": "greedy",
    "coherence_top_n": 10,
    "window": 20,
    "epsilon": 1e-12,
    "seed": 0,
}

HIGHLIGHT_DEFAULTS = {
    "corpus": None,
    "model": None,
    "results": None,
    "docs": "all",
    "format": "html",
    "threshold": 0.5,
    "seed": 0,
}

EXPORT_DEFAULTS = {
    "model": None,
    "corpus": None,
    "iterations": 200,
    "burn_in": 100,
    "sample_lag": 5,
    "specific_word_prob": None,
    "x_prior": None,
    "unknown_term_limit": 0.1,
    "seed": 0,
}

_DEFAULTS = {
    "gen": GEN_DEFAULTS,
    "train": TRAIN_DEFAULTS,
    "infer": INFER_DEFAULTS,
    "eval": EVAL_DEFAULTS,
    "highlight": HIGHLIGHT_DEFAULTS,
    "export-features": EXPORT_DEFAULTS,
}

_PATH_FLAGS = ("corpus", "model", "truth", "test_corpus", "results", "reference")


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="JSON config file; flags override its values")
    shared.add_argument("--seed", type=int, help="override the config seed")
    shared.add_argument("--out", default=None,
                        help="output directory, created if missing (default: out)")
    shared.add_argument("--verbose", action="store_true", help="progress logging to stderr")
    shared.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        dest="overrides",
                        help="override any config key (repeatable); value parsed as JSON")

    parser = argparse.ArgumentParser(
        prog="parlda",
        description="Paragraph-aware topic modeling: generate, train, infer, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen", parents=[shared],
                   help="generate a synthetic corpus with ground truth")

    p_train = sub.add_parser("train", parents=[shared], help="train a model on a corpus")
    p_train.add_argument("--corpus", help="training corpus (JSONL)")
    p_train.add_argument("--model-type", choices=["parlda", "lda"], dest="model_type")
    p_train.add_argument("--chains", type=int,
                         help="independent seeded chains run concurrently")

    p_infer = sub.add_parser("infer", parents=[shared],
                             help="fold a held-out corpus into a trained model")
    p_infer.add_argument("--model", help="trained model JSON")
    p_infer.add_argument("--corpus", help="held-out corpus (JSONL)")

    p_eval = sub.add_parser("eval", parents=[shared], help="evaluate a trained model")
    p_eval.add_argument("--model", help="trained model JSON")
    p_eval.add_argument("--truth", help="ground-truth JSON for recovery metrics")
    p_eval.add_argument("--test-corpus", dest="test_corpus",
                        help="labeled held-out corpus (JSONL) for ROC")
    p_eval.add_argument("--results", help="per-paragraph probability CSV for ROC")
    p_eval.add_argument("--reference", help="reference corpus (JSONL) for coherence")

    p_high = sub.add_parser("highlight", parents=[shared],
                            help="annotate documents with paragraph types")
    p_high.add_argument("--corpus", help="corpus (JSONL) holding the documents")
    p_high.add_argument("--model", help="model JSON with paragraph probabilities")
    p_high.add_argument("--results", help="per-paragraph probability CSV")
    p_high.add_argument("--docs", help="comma-separated document ids, or 'all'")
    p_high.add_argument("--format", choices=["html", "text"])
    p_high.add_argument("--threshold", type=float,
                        help="specific iff p_specific >= threshold")

    p_exp = sub.add_parser("export-features", parents=[shared],
                           help="per-paragraph assignment features as CSV")
    p_exp.add_argument("--model", help="trained model JSON")
    p_exp.add_argument("--corpus", help="corpus (JSONL) to featurize")

    return parser


def _parse_override(item: str) -> tuple[str, object]:
    if "=" not in item:
        raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge defaults, config file, and flags (in that order) and validate keys."""
    defaults = _DEFAULTS[args.command]
    config = dict(defaults)
    file_out = None
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {args.config}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file is not valid JSON: {e}") from e
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        for key, value in file_cfg.items():
            if key == "out":
                file_out = value
                continue
            if key not in defaults:
                raise ConfigError(f"unknown config key {key!r} for command {args.command}")
            config[key] = value
    for item in args.overrides:
        key, value = _parse_override(item)
        if key not in defaults:
            raise ConfigError(f"unknown config key {key!r} for command {args.command}")
        config[key] = value
    for key in defaults:
        flag_value = getattr(args, key, None)
        if flag_value is not None and key in vars(args):
            config[key] = flag_value
    if args.seed is not None:
        config["seed"] = args.seed
    config["out"] = str(args.out if args.out is not None else (file_out or "out"))
    return config


def _write_resolved(config: dict, out_dir: Path, command: str) -> None:
    name = command.replace("-", "_") + "_config.json"
    with open(out_dir / name, "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _require(config: dict, key: str) -> str:
    value = config.get(key)
    if not value:
        raise ConfigError(f"config key {key!r} is required")
    return value


def _load_corpus(path: str) -> Corpus:
    """Read a corpus: JSONL file, or a directory / .txt file of plaintext."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"corpus not found: {path}")
    if p.is_dir() or p.suffix == ".txt":
        return ingest_plaintext([p], TokenizerConfig())
    return ingest_jsonl(p)


def _validated_schedule(config: dict) -> Schedule:
    try:
        schedule = Schedule(iterations=int(config["iterations"]),
                            burn_in=int(config["burn_in"]),
                            sample_lag=int(config["sample_lag"]),
                            seed=int(config["seed"]))
        schedule.validate()
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid schedule: {e}") from e
    return schedule


def _write_trace_csv(trace: list[float], path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "log_joint"])
        for i, value in enumerate(trace, start=1):
            writer.writerow([i, repr(float(value))])


def _write_results_csv(model: gibbs.TopicModel, corpus: Corpus, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["doc_id", "paragraph_index", "p_specific"])
        flat = 0
        for doc in corpus.documents:
            for pi in range(len(doc.paragraphs)):
                value = "" if model.p_specific is None else repr(float(model.p_specific[flat]))
                writer.writerow([doc.id, pi, value])
                flat += 1


def _read_results_csv(path: str) -> dict[tuple[str, int], float]:
    scores: dict[tuple[str, int], float] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "p_specific" not in reader.fieldnames:
            raise ValueError(f"{path}: not a results CSV (missing p_specific column)")
        for row in reader:
            scores[(row["doc_id"], int(row["paragraph_index"]))] = float(row["p_specific"])
    return scores


# -- commands ----------------------------------------------------------------


def cmd_gen(config: dict, out_dir: Path) -> None:
    gen_keys = {k: v for k, v in config.items() if k not in ("test_fraction", "out")}
    try:
        gcfg = synth.GenerativeConfig(**gen_keys)
        gcfg.validate()
        fraction = config["test_fraction"]
        if fraction and not 0.0 < fraction < 1.0:
            raise ValueError("test_fraction must be 0 or strictly between 0 and 1")
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e
    corpus, truth = synth.generate(gcfg)
    synth.save_truth(truth, out_dir / "truth.json")
    if fraction:
        train, test = synth.split(corpus, fraction, gcfg.seed)
        write_jsonl(train, out_dir / "train.jsonl")
        write_jsonl(test, out_dir / "test.jsonl")
        logger.info("wrote %d train / %d test documents",
                    train.n_documents(), test.n_documents())
    else:
        write_jsonl(corpus, out_dir / "corpus.jsonl")
        logger.info("wrote %d documents", corpus.n_documents())


def _hyper_from_train_config(config: dict) -> Hyperparams:
    if config["model_type"] == "lda":
        return Hyperparams(
            n_general_topics=config["n_general_topics"],
            n_specific_topics=0,
            alpha_general=config["alpha_general"],
            beta_general=config["beta_general"],
        )
    return Hyperparams(
        n_general_topics=config["n_general_topics"],
        n_specific_topics=config["n_specific_topics"],
        alpha_general=config["alpha_general"],
        alpha_specific=config["alpha_specific"],
        beta_general=config["beta_general"],
        beta_specific=config["beta_specific"],
        gamma=config["gamma"],
        gamma_words=config["gamma_words"],
        specific_word_prob=config["specific_word_prob"],
        x_prior=config["x_prior"],
    )


def _train_one(corpus: Corpus, config: dict, seed: int) -> gibbs.TopicModel:
    hyper = _hyper_from_train_config(config)
    schedule = _validated_schedule({**config, "seed": seed})
    train = gibbs.train_lda if config["model_type"] == "lda" else gibbs.train_parlda
    return train(corpus, hyper, schedule,
                 debug_recount=config["debug_recount"],
                 candidate_chains=config["candidate_chains"])


def _average_models(models: list[gibbs.TopicModel]) -> gibbs.TopicModel:
    """Elementwise mean of per-chain estimates.

    Chains may disagree on topic labels (and, for the paragraph model, on
    type orientation), so the average is a rough ensemble diagnostic, not
    a posterior mean; per-chain files carry the real results.
    """
    first = models[0]
    mean = lambda attr: np.mean([getattr(m, attr) for m in models], axis=0)
    return gibbs.TopicModel(
        type=first.type,
        hyper=first.hyper,
        vocabulary=list(first.vocabulary),
        phi_general=mean("phi_general"),
        phi_specific=mean("phi_specific"),
        theta_general=mean("theta_general"),
        theta_specific=mean("theta_specific"),
        p_specific=None if first.p_specific is None else mean("p_specific"),
        type_term_counts=(None if first.type_term_counts is None
                          else mean("type_term_counts")),
        log_joint_trace=list(first.log_joint_trace),
    )


def cmd_train(config: dict, out_dir: Path) -> None:
    try:
        if config["model_type"] not in ("parlda", "lda"):
            raise ValueError(f"unknown model_type {config['model_type']!r}")
        hyper = _hyper_from_train_config(config)
        hyper.validate(config["model_type"])
        if int(config["candidate_chains"]) < 1:
            raise ValueError("candidate_chains must be >= 1")
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e
    _validated_schedule(config)
    corpus = _load_corpus(_require(config, "corpus"))
    chains = int(config["chains"])
    if chains < 1:
        raise ConfigError("chains must be >= 1")
    if chains == 1:
        model = _train_one(corpus, config, int(config["seed"]))
        gibbs.save_model(model, out_dir / "model.json")
        _write_trace_csv(model.log_joint_trace, out_dir / "trace.csv")
        return
    seeds = [int(config["seed"]) + i for i in range(chains)]
    with ThreadPoolExecutor(max_workers=chains) as pool:
        futures = [pool.submit(_train_one, corpus, config, s) for s in seeds]
        models = [f.result() for f in futures]
    for i, model in enumerate(models):
        gibbs.save_model(model, out_dir / f"model_chain{i}.json")
        _write_trace_csv(model.log_joint_trace, out_dir / f"trace_chain{i}.csv")
    averaged = _average_models(models)
    gibbs.save_model(averaged, out_dir / "model.json")
    _write_trace_csv(averaged.log_joint_trace, out_dir / "trace.csv")


def _inference_hyper(model: gibbs.TopicModel, config: dict) -> Hyperparams:
    hyper = model.hyper
    changes = {}
    if config.get("specific_word_prob") is not None:
        changes["specific_word_prob"] = config["specific_word_prob"]
    if config.get("x_prior") is not None:
        changes["x_prior"] = config["x_prior"]
    if changes:
        hyper = replace(hyper, **changes)
    return hyper


def cmd_infer(config: dict, out_dir: Path) -> None:
    schedule = _validated_schedule(config)
    model = gibbs.load_model(_require(config, "model"))
    corpus = _load_corpus(_require(config, "corpus"))
    result = gibbs.infer_heldout(
        model, corpus, _inference_hyper(model, config), schedule,
        unknown_term_limit=config["unknown_term_limit"])
    gibbs.save_model(result, out_dir / "inferred.json")
    _write_results_csv(result, corpus, out_dir / "results.csv")


def _stacked_phi(model: gibbs.TopicModel) -> np.ndarray:
    if model.phi_specific.shape[0]:
        return np.vstack([model.phi_general, model.phi_specific])
    return model.phi_general


def cmd_eval(config: dict, out_dir: Path) -> None:
    model = gibbs.load_model(_require(config, "model"))
    report = evaluation.EvalReport(config=dict(config))
    learned = _stacked_phi(model)

    if config.get("truth"):
        truth = synth.load_truth(config["truth"])
        truth_phi = np.vstack([truth.phi_general, truth.phi_specific])
        truth_phi = evaluation.align_columns(truth_phi, truth.vocabulary,
                                             model.vocabulary)
        row_sums = truth_phi.sum(axis=1, keepdims=True)
        truth_phi = truth_phi / np.where(row_sums == 0.0, 1.0, row_sums)
        match = evaluation.match_topics(learned, truth_phi,
                                        method=config["matching"])
        report.matched_pairs = match.pairs
        report.mean_similarity = (
            float(np.mean([s for _, _, s in match.pairs])) if match.pairs else 0.0)
        report.recovered_topics = evaluation.topic_recovery_count(
            learned, truth_phi, top_n=config["top_n"],
            overlap_min=config["overlap_min"], method=config["matching"])

    if config.get("results") or config.get("test_corpus"):
        if not (config.get("results") and config.get("test_corpus")):
            raise ConfigError("ROC needs both test_corpus and results")
        test_corpus = _load_corpus(config["test_corpus"])
        labels = test_corpus.labels_flat()
        if labels is None:
            raise ValueError("test corpus carries no gold paragraph labels")
        scores_by_key = _read_results_csv(config["results"])
        scores = []
        for doc in test_corpus.documents:
            for pi in range(len(doc.paragraphs)):
                key = (doc.id, pi)
                if key not in scores_by_key:
                    raise ValueError(f"results file lacks paragraph {key}")
                scores.append(scores_by_key[key])
        report.roc = evaluation.roc_curve(scores, labels)
        with open(out_dir / "roc.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["fpr", "tpr"])
            for fpr, tpr in report.roc.points:
                writer.writerow([repr(fpr), repr(tpr)])

    if config.get("reference"):
        reference = _load_corpus(config["reference"])
        n = config["coherence_top_n"]
        top = [model.top_terms("general", k, n)
               for k in range(model.phi_general.shape[0])]
        n_general = len(top)
        top += [model.top_terms("specific", k, n)
                for k in range(model.phi_specific.shape[0])]
        coherence = evaluation.coherence_npmi(
            top, reference, window=config["window"], epsilon=config["epsilon"])
        report.coherence_per_topic = [float(c) for c in coherence]
        report.mean_coherence_all = float(np.mean(coherence))
        if coherence.shape[0] > n_general:
            report.mean_coherence_specific = float(np.mean(coherence[n_general:]))

    with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _paragraph_scores(config: dict, corpus: Corpus) -> np.ndarray:
    if config.get("results"):
        by_key = _read_results_csv(config["results"])
        scores = []
        for doc in corpus.documents:
            for pi in range(len(doc.paragraphs)):
                key = (doc.id, pi)
                if key not in by_key:
                    raise ValueError(f"results file lacks paragraph {key}")
                scores.append(by_key[key])
        return np.asarray(scores)
    if config.get("model"):
        model = gibbs.load_model(config["model"])
        if model.p_specific is None:
            raise ValueError("model has no paragraph probabilities (plain LDA)")
        if model.p_specific.shape[0] != corpus.n_paragraphs():
            raise ValueError("model paragraph probabilities do not match this corpus")
        return np.asarray(model.p_specific)
    raise ConfigError("highlight needs either a model or a results file")


def cmd_highlight(config: dict, out_dir: Path) -> None:
    corpus = _load_corpus(_require(config, "corpus"))
    scores = _paragraph_scores(config, corpus)
    threshold = float(config["threshold"])

    wanted = config["docs"]
    if wanted == "all":
        doc_ids = [doc.id for doc in corpus.documents]
    else:
        doc_ids = [d.strip() for d in wanted.split(",") if d.strip()]
        known = {doc.id for doc in corpus.documents}
        missing = [d for d in doc_ids if d not in known]
        if missing:
            raise ConfigError(f"unknown document ids: {', '.join(missing)}")

    offsets = {}
    flat = 0
    for doc in corpus.documents:
        offsets[doc.id] = flat
        flat += len(doc.paragraphs)
    by_id = {doc.id: doc for doc in corpus.documents}

    if config["format"] == "text":
        lines = []
        for doc_id in doc_ids:
            doc = by_id[doc_id]
            lines.append(f"# {doc_id}")
            for pi, text in enumerate(paragraphs_as_text(corpus, doc)):
                p = scores[offsets[doc_id] + pi]
                tag = "SPECIFIC" if p >= threshold else "GENERAL"
                lines.append(f"[{tag} {p:.3f}] {text}")
            lines.append("")
        (out_dir / "highlight.txt").write_text("\n".join(lines), encoding="utf-8")
        return

    parts = [
        "<html><head><meta charset=\"utf-8\"/><title>paragraph types</title>",
        "<style>",
        "body { font-family: sans-serif; max-width: 60em; margin: 2em auto; }",
        "p { padding: 0.4em 0.8em; border-left: 4px solid #bbb; }",
        "p.specific { border-left-color: #c0392b; background: #fbeeec; }",
        "p.general { border-left-color: #2980b9; background: #edf4fa; }",
        "span.tag { font-weight: bold; margin-right: 0.6em; }",
        "</style></head><body>",
        "<h1>Paragraph types</h1>",
    ]
    for doc_id in doc_ids:
        doc = by_id[doc_id]
        parts.append(f"<section><h2>{html.escape(doc_id)}</h2>")
        for pi, text in enumerate(paragraphs_as_text(corpus, doc)):
            p = scores[offsets[doc_id] + pi]
            cls = "specific" if p >= threshold else "general"
            parts.append(
                f"<p class=\"{cls}\" data-p=\"{p:.6f}\">"
                f"<span class=\"tag\">{cls} {p:.3f}</span>{html.escape(text)}</p>"
            )
        parts.append("</section>")
    parts.append("</body></html>")
    (out_dir / "highlight.html").write_text("\n".join(parts), encoding="utf-8")


def cmd_export_features(config: dict, out_dir: Path) -> None:
    schedule = _validated_schedule(config)
    model = gibbs.load_model(_require(config, "model"))
    corpus = _load_corpus(_require(config, "corpus"))
    result, state = gibbs.infer_heldout(
        model, corpus, _inference_hyper(model, config), schedule,
        unknown_term_limit=config["unknown_term_limit"], return_state=True)
    evaluation.export_features(state, corpus, out_dir / "features.csv",
                               p_specific=result.p_specific)


_COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "highlight": cmd_highlight,
    "export-features": cmd_export_features,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = resolve_config(args)
        out_dir = Path(config["out"])
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_resolved(config, out_dir, args.command)
        _COMMANDS[args.command](config, out_dir)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failure: bad inputs, I/O, sampler errors
        print(f"error: {e}", file=sys.stderr)
        logger.debug("failure detail", exc_info=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
