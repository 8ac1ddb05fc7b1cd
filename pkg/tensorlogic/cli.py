#!/usr/bin/env python3
"""
Command-line interface for tensorlogic

Every command prints a JSON report to stdout (or writes it to --report-out).
Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.
"""

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, NoReturn, Optional, Sequence

import numpy as np
from loguru import logger

from . import __version__
from .checkpoint import load_embed_model, load_superposition_model, save_embed_model, save_superposition_model
from .closure import DEFAULT_MAX_ITERS, DEFAULT_PROGRAM, ENGINES, ClosureProgram, lineage, verify
from .embed import COMPOSITION_CHAIN, EmbedModel, TrainConfig, compose_infer, train, training_accuracy
from .embed import check_gradients as check_embed_gradients
from .evaluation import FilterIndex, build_comp_bench, evaluate_comp, evaluate_lp, load_bench, random_baseline_mrr, \
    save_bench
from .exceptions import ExperimentStageError, GradientCheckError, TensorLogicException, ValidationError
from .experiments import run_experiment
from .logging import configure_logging
from .parameters import apply_overrides, build_config, load_config_file, parse_assignments
from .reports import RunReport, atomic_write_text, hash_inputs
from .store import DatasetSplit, TripleStore, Vocabulary, load_countries, load_genealogy, load_triples_tsv, \
    read_triples_tsv, save_triples_tsv
from .superposition import SuperpositionModel, SuperTrainConfig, comp_validator, compose_predict, rank_entities, \
    train_superposition
from .superposition import check_gradients as check_superposition_gradients
from .tensor import DEFAULT_SEED, make_rng, xavier_uniform

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_FAILURE = 2


class _Parser(argparse.ArgumentParser):
    """Usage errors are invalid input, not runtime failures"""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def create_parser() -> argparse.ArgumentParser:
    """Create command-line argument parser"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="Enable debug logging")
    common.add_argument("--quiet", action="store_true", help="Only log warnings and errors")
    common.add_argument("--report-out", type=Path, help="Write the JSON report here instead of stdout")

    parser = _Parser(
        prog="tensorlogic",
        description="Logical rules as tensor equations: closure, relation embeddings and compositional link prediction",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    closure = commands.add_parser("closure", parents=[common], help="Ancestor closure over a genealogy")
    closure.add_argument("--persons", "--person-csv", dest="persons", type=Path, required=True,
                         help="Person table (person_id, person_name)")
    closure.add_argument("--relationships", "--relationship-csv", dest="relationships", type=Path, required=True,
                         help="Relationship table (person_id_1, relationship_type, person_id_2)")
    closure.add_argument("--rule", "--program", dest="rule", help="Closure program text (default: the ancestor program)")
    closure.add_argument("--rule-file", "--program-file", dest="rule_file", type=Path,
                         help="Read the closure program from a file")
    closure.add_argument("--engine", choices=tuple(ENGINES), default="seminaive", help="Fixpoint engine (default: seminaive)")
    closure.add_argument("--max-iters", type=int, default=DEFAULT_MAX_ITERS, help="Iteration cap")
    closure.add_argument("--verify", action="store_true", help="Check containment, closure and acyclicity of the result")
    closure.add_argument("--lineage", action="append", default=[], metavar="PERSON",
                         help="Report ancestors and descendants of PERSON (id or name; repeatable)")
    closure.add_argument("--trace-out", type=Path, help="Write per-iteration edge counts as JSON lines")

    train_geo = commands.add_parser("train-geo", parents=[common], help="Train relation-matrix embeddings on countries")
    train_geo.add_argument("--countries", type=Path, required=True, help="Countries JSON file")
    train_geo.add_argument("--dim", type=int, default=64, help="Embedding dimension (default: 64)")
    train_geo.add_argument("--lr", type=float, default=0.005, help="Adam learning rate (default: 0.005)")
    train_geo.add_argument("--epochs", type=int, default=500, help="Full-batch epochs (default: 500)")
    train_geo.add_argument("--seed", type=int, default=DEFAULT_SEED, help="Random seed (default: 42)")
    train_geo.add_argument("--no-normalize", action="store_true", help="Do not project embeddings to unit length")
    train_geo.add_argument("--model-out", type=Path, help="Save the trained model checkpoint")
    train_geo.add_argument("--progress", action="store_true", help="Show a progress bar")

    infer_geo = commands.add_parser("infer-geo", parents=[common], help="Chain relation matrices from a subject")
    infer_geo.add_argument("--model", type=Path, required=True, help="Embedding model checkpoint")
    infer_geo.add_argument("--subject", required=True, help="Subject entity name")
    infer_geo.add_argument("--chain", default=",".join(COMPOSITION_CHAIN), help="Comma-separated relation chain")
    infer_geo.add_argument("--topk", type=int, default=5, help="Entities to list (default: 5)")

    train_kg = commands.add_parser("train-kg", parents=[common], help="Train the superposition model")
    train_kg.add_argument("--train", type=Path, required=True, help="Training triples (TSV)")
    train_kg.add_argument("--valid", type=Path, required=True, help="Validation triples (TSV)")
    train_kg.add_argument("--test", type=Path, required=True, help="Test triples (TSV)")
    train_kg.add_argument("--dim", type=int, default=256, help="Embedding dimension (default: 256)")
    train_kg.add_argument("--lr", type=float, default=5e-4, help="AdamW learning rate (default: 0.0005)")
    train_kg.add_argument("--wd", type=float, default=1e-5, help="Decoupled weight decay (default: 1e-5)")
    train_kg.add_argument("--batch", type=int, default=1024, help="Batch size (default: 1024)")
    train_kg.add_argument("--temp", type=float, default=0.1, help="Softmax temperature (default: 0.1)")
    train_kg.add_argument("--clip", type=float, default=1.0, help="Gradient-norm clip (default: 1.0)")
    train_kg.add_argument("--epochs", type=int, default=50, help="Epochs (default: 50)")
    train_kg.add_argument("--validate-every", type=int, default=10, help="Epochs between validations (default: 10)")
    train_kg.add_argument("--valid-sample", type=int, help="Validate on a seeded subsample of this many triples")
    train_kg.add_argument("--seed", type=int, default=DEFAULT_SEED, help="Random seed (default: 42)")
    train_kg.add_argument("--model-out", type=Path, help="Save the selected model checkpoint")
    train_kg.add_argument("--remove-edges", type=Path, metavar="BENCH",
                          help="Train without the benchmark's direct edges and select by composition MRR")
    train_kg.add_argument("--progress", action="store_true", help="Show progress bars")

    compose = commands.add_parser("compose-predict", parents=[common], help="Two-hop query on a superposition model")
    compose.add_argument("--model", type=Path, required=True, help="Superposition model checkpoint")
    compose.add_argument("--head", required=True, help="Start entity")
    compose.add_argument("--r1", required=True, help="First relation")
    compose.add_argument("--r2", required=True, help="Second relation")
    compose.add_argument("--topk", type=int, default=10, help="Entities to list (default: 10)")

    eval_kg = commands.add_parser("eval-kg", parents=[common], help="Filtered link prediction")
    eval_kg.add_argument("--model", type=Path, required=True, help="Superposition model checkpoint")
    eval_kg.add_argument("--test", type=Path, required=True, help="Triples to rank (TSV)")
    eval_kg.add_argument("--filter-splits", type=Path, nargs="*", default=[],
                         help="Further splits whose triples are filtered (training triples always are)")
    eval_kg.add_argument("--batch-size", type=int, default=256, help="Queries per scoring batch")

    bench = commands.add_parser("build-bench", parents=[common], help="Build the two-hop composition benchmark")
    bench.add_argument("--train", type=Path, required=True, help="Training triples (TSV)")
    bench.add_argument("--n-valid", type=int, default=1000, help="Validation paths (default: 1000)")
    bench.add_argument("--n-test", type=int, default=1000, help="Test paths (default: 1000)")
    bench.add_argument("--seed", type=int, default=DEFAULT_SEED, help="Sampling seed (default: 42)")
    bench.add_argument("--bench-out", type=Path, required=True, help="Benchmark JSON-lines output")
    bench.add_argument("--reduced-train-out", type=Path, help="Training triples without the removed edges")

    eval_comp = commands.add_parser("eval-comp", parents=[common], help="Composition metrics on a benchmark")
    eval_comp.add_argument("--model", type=Path, required=True, help="Superposition model checkpoint")
    eval_comp.add_argument("--bench", type=Path, required=True, help="Benchmark JSON-lines file")
    eval_comp.add_argument("--filter-splits", type=Path, nargs="*", default=[],
                           help="Further splits whose triples are filtered (training and removed edges always are)")
    eval_comp.add_argument("--split", choices=("valid", "test"), default="test", help="Benchmark split (default: test)")

    gradcheck = commands.add_parser("gradcheck", parents=[common], help="Finite-difference check on a toy model")
    gradcheck.add_argument("--model-kind", choices=("embed", "superposition"), default="superposition")
    gradcheck.add_argument("--entities", type=int, default=6)
    gradcheck.add_argument("--relations", type=int, default=2)
    gradcheck.add_argument("--facts", type=int, default=8)
    gradcheck.add_argument("--dim", type=int, default=4)
    gradcheck.add_argument("--temp", type=float, default=1.0)
    gradcheck.add_argument("--eps", type=float, default=1e-5)
    gradcheck.add_argument("--tolerance", type=float, default=1e-4)
    gradcheck.add_argument("--seed", type=int, default=DEFAULT_SEED)

    run = commands.add_parser("run", parents=[common], help="Run an experiment from a configuration file")
    run.add_argument("--config", type=Path, required=True, help="JSON configuration file")
    run.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="Override one value")
    run.add_argument("--seed", type=int, help="Override the configuration seed")
    run.add_argument("--output-dir", type=Path, help="Override the configuration output directory")

    return parser


def _closure(args: argparse.Namespace, report: RunReport) -> None:
    genealogy = load_genealogy(args.persons, args.relationships)
    text = args.rule_file.read_text(encoding="utf-8") if args.rule_file else (args.rule or DEFAULT_PROGRAM)
    program = ClosureProgram.from_text(text)
    ancestor, trace = program.evaluate({"Parent": genealogy.parents}, engine=args.engine, max_iters=args.max_iters)
    if args.trace_out:
        atomic_write_text(args.trace_out, "".join(json.dumps(record) + "\n" for record in trace.records()))
    lineages = {person: lineage(ancestor, genealogy.people, person, genealogy.parents,
                                genealogy.display_names).to_dict(genealogy.display_names)
                for person in args.lineage}
    report.dataset = genealogy.stats()
    report.inputs = hash_inputs({"person_csv": args.persons, "relationship_csv": args.relationships})
    report.results = {"program": str(program), "closure": {**trace.to_dict(), "nodes": genealogy.stats()["nodes"]},
                      "lineage": lineages}
    if args.verify:
        report.results["verification"] = verify(genealogy.parents, ancestor).to_dict()


def _train_geo(args: argparse.Namespace, report: RunReport) -> None:
    store = load_countries(args.countries)
    config = TrainConfig(learning_rate=args.lr, epochs=args.epochs, dim=args.dim, seed=args.seed,
                         normalize_embeddings=not args.no_normalize)
    model, curve = train(store, config, progress=args.progress)
    if args.model_out:
        save_embed_model(model, args.model_out)
    report.dataset = store.stats()
    report.inputs = hash_inputs({"countries": args.countries})
    report.results = {"initial_loss": curve.initial, "final_loss": curve.final, "epochs": len(curve),
                      "training_accuracy": training_accuracy(model, store)}


def _infer_geo(args: argparse.Namespace, report: RunReport) -> None:
    model: EmbedModel = load_embed_model(args.model)
    chain = [name.strip() for name in args.chain.split(",") if name.strip()]
    ranking = compose_infer(model, args.subject, chain, topk=args.topk)
    report.inputs = hash_inputs({"model": args.model})
    report.results = {"subject": args.subject, "chain": chain,
                      "ranking": [{"entity": name, "score": score} for name, score in ranking]}


def _train_kg(args: argparse.Namespace, report: RunReport) -> None:
    split = load_triples_tsv(args.train, args.valid, args.test)
    config = SuperTrainConfig(learning_rate=args.lr, weight_decay=args.wd, batch_size=args.batch,
                              temperature=args.temp, clip_norm=args.clip, epochs=args.epochs,
                              validate_every=args.validate_every, seed=args.seed, dim=args.dim,
                              valid_sample=args.valid_sample)
    validator = None
    training = split
    if args.remove_edges:
        bench = load_bench(args.remove_edges, split.entities, split.relations)
        training = DatasetSplit(split.train.without(bench.removed_edges), split.valid, split.test, split.sources)
        if bench.valid:
            validator = comp_validator(bench, FilterIndex.from_split(split))
        else:
            logger.warning(f"{args.remove_edges} has no validation paths; selecting the model by link prediction")
    model, history = train_superposition(training, config, validator=validator, progress=args.progress)
    if args.model_out:
        save_superposition_model(model, args.model_out)
    report.dataset = training.stats()
    report.inputs = hash_inputs({"train": args.train, "valid": args.valid, "test": args.test,
                                 "remove_edges": args.remove_edges})
    report.results = {"training": history.to_dict()}


def _compose_predict(args: argparse.Namespace, report: RunReport) -> None:
    model: SuperpositionModel = load_superposition_model(args.model)
    scores = compose_predict(model, args.head, args.r1, args.r2)
    report.inputs = hash_inputs({"model": args.model})
    report.results = {"head": args.head, "r1": args.r1, "r2": args.r2,
                      "ranking": [{"entity": name, "score": score}
                                  for name, score in rank_entities(model, scores, args.topk)]}


def _model_filters(model: SuperpositionModel, paths: Sequence[Path], *stores: TripleStore,
                   extra=()) -> FilterIndex:
    train = TripleStore(model.entities, model.relations, model.train_triples)
    others = [read_triples_tsv(path, model.entities, model.relations) for path in paths]
    return FilterIndex.from_stores(train, *others, *stores, extra=extra)


def _eval_kg(args: argparse.Namespace, report: RunReport) -> None:
    model: SuperpositionModel = load_superposition_model(args.model)
    test = read_triples_tsv(args.test, model.entities, model.relations)
    filters = _model_filters(model, args.filter_splits, test)
    metrics = evaluate_lp(model.scorer(), test, filters, batch_size=args.batch_size)
    report.dataset = test.stats()
    report.inputs = hash_inputs({"model": args.model, "test": args.test,
                                 **{f"filter_{i}": path for i, path in enumerate(args.filter_splits)}})
    report.results = {"test": metrics.to_dict(), "random_baseline_mrr": random_baseline_mrr(model.num_entities)}


def _build_bench(args: argparse.Namespace, report: RunReport) -> None:
    split = load_triples_tsv(train=args.train)
    bench, reduced = build_comp_bench(split.train, args.n_valid, args.n_test, args.seed)
    save_bench(bench, args.bench_out, split.entities, split.relations)
    if args.reduced_train_out:
        save_triples_tsv(reduced, args.reduced_train_out)
    report.dataset = {"train": len(split.train), "reduced_train": len(reduced), **bench.stats()}
    report.inputs = hash_inputs({"train": args.train})


def _eval_comp(args: argparse.Namespace, report: RunReport) -> None:
    model: SuperpositionModel = load_superposition_model(args.model)
    bench = load_bench(args.bench, model.entities, model.relations)
    filters = _model_filters(model, args.filter_splits, extra=bench.removed_edges)
    metrics = evaluate_comp(model.scorer(), bench, filters, split=args.split)
    report.dataset = bench.stats()
    report.inputs = hash_inputs({"model": args.model, "bench": args.bench})
    report.results = {args.split: metrics.to_dict(), "random_baseline_mrr": random_baseline_mrr(model.num_entities)}


def _toy_store(num_entities: int, num_relations: int, num_facts: int, seed: int) -> TripleStore:
    rng = make_rng(seed, 7)
    entities = Vocabulary("entity", [f"e{i}" for i in range(num_entities)]).freeze()
    relations = Vocabulary("relation", [f"r{i}" for i in range(num_relations)]).freeze()
    triples = np.stack([rng.integers(0, num_entities, num_facts), rng.integers(0, num_relations, num_facts),
                        rng.integers(0, num_entities, num_facts)], axis=1)
    return TripleStore(entities, relations, triples)


def _gradcheck(args: argparse.Namespace, report: RunReport) -> None:
    store = _toy_store(args.entities, args.relations, args.facts, args.seed)
    if args.model_kind == "embed":
        M = np.stack([xavier_uniform(args.dim, args.dim, make_rng(args.seed, 1, r)) for r in range(args.relations)])
        embed = EmbedModel(xavier_uniform(args.entities, args.dim, make_rng(args.seed, 0)), M,
                           store.entities, store.relations)
        error = check_embed_gradients(embed, store, eps=args.eps, seed=args.seed)
    else:
        model = SuperpositionModel.from_store(xavier_uniform(args.entities, args.dim, make_rng(args.seed, 0)), store)
        error = check_superposition_gradients(model, store.triples, args.temp, eps=args.eps, seed=args.seed)
    report.dataset = store.stats()
    report.results = {"model_kind": args.model_kind, "max_relative_error": error, "tolerance": args.tolerance,
                      "passed": error < args.tolerance}
    if error >= args.tolerance:
        raise GradientCheckError(f"Max relative error {error:.3e} exceeds tolerance {args.tolerance:.1e}")


def _run(args: argparse.Namespace, report: RunReport) -> RunReport:
    raw = load_config_file(args.config)
    overrides: Dict[str, Any] = dict(parse_assignments(args.set))
    overrides["seed"] = args.seed
    overrides["output_dir"] = str(args.output_dir) if args.output_dir else None
    config = build_config(apply_overrides(raw, overrides), source=args.config)
    return run_experiment(config)


COMMANDS: Dict[str, Callable[[argparse.Namespace, RunReport], Optional[RunReport]]] = {
    "closure": _closure,
    "train-geo": _train_geo,
    "infer-geo": _infer_geo,
    "train-kg": _train_kg,
    "compose-predict": _compose_predict,
    "eval-kg": _eval_kg,
    "build-bench": _build_bench,
    "eval-comp": _eval_comp,
    "gradcheck": _gradcheck,
    "run": _run,
}


def _config_echo(args: argparse.Namespace) -> Dict[str, Any]:
    skip = {"command", "verbose", "quiet", "report_out", "progress"}
    return {key: str(value) if isinstance(value, Path) else
            [str(v) if isinstance(v, Path) else v for v in value] if isinstance(value, list) else value
            for key, value in sorted(vars(args).items()) if key not in skip}


def _emit(report: RunReport, destination: Optional[Path]) -> None:
    if destination:
        report.write(destination)
    else:
        print(report.to_json(), end="")


def _exit_code(error: BaseException) -> int:
    if isinstance(error, ExperimentStageError):
        return _exit_code(error.cause)
    if isinstance(error, (ValidationError, FileNotFoundError, IsADirectoryError)):
        return EXIT_INVALID
    return EXIT_FAILURE


def execute(argv: Optional[List[str]] = None) -> int:
    """Run one command and return its exit code"""
    parser = create_parser()
    args = parser.parse_args(argv)
    configure_logging(verbose=args.verbose, quiet=args.quiet)

    started = time.perf_counter()
    report = RunReport(command=args.command, config=_config_echo(args))
    try:
        result = COMMANDS[args.command](args, report)
    except GradientCheckError as error:
        logger.error(str(error))
        _emit(report, args.report_out)
        return EXIT_FAILURE
    except (TensorLogicException, FileNotFoundError, IsADirectoryError) as error:
        logger.error(str(error))
        return _exit_code(error)
    if result is not None:
        report = result
    else:
        report.wall_clock_seconds = round(time.perf_counter() - started, 3)
    _emit(report, args.report_out)
    return EXIT_OK


def main() -> None:
    """Main CLI entry point"""
    sys.exit(execute())


if __name__ == "__main__":
    main()
