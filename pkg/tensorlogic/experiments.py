"""
End-to-end experiments:

    exp1   ancestor closure over a genealogy, verification, lineage queries
    exp2   relation-matrix embeddings on capitals/countries, zero-shot composition
    exp3a  superposition model, filtered link prediction
    exp3b  superposition model on a train split stripped of two-hop shortcuts,
           composition metrics next to direct-edge link prediction
"""

import json
import math
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional

from loguru import logger

from .checkpoint import save_embed_model, save_superposition_model
from .closure import DEFAULT_PROGRAM, ClosureProgram, lineage, verify
from .embed import train, training_accuracy, zero_shot_table
from .evaluation import FilterIndex, build_comp_bench, evaluate_comp, evaluate_lp, load_bench, random_baseline_mrr, \
    save_bench
from .exceptions import ExperimentStageError
from .logging import log
from .parameters import ExperimentConfig
from .reports import RunReport, atomic_write_text, hash_inputs
from .store import DatasetSplit, load_countries, load_genealogy, load_triples_tsv, save_triples_tsv
from .superposition import comp_validator, train_superposition


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Label any failure inside the block with the experiment stage it happened in"""
    logger.debug(f"Stage '{name}' started")
    try:
        yield
    except ExperimentStageError:
        raise
    except Exception as error:
        raise ExperimentStageError(name, error) from error


def _output(config: ExperimentConfig, name: str) -> Optional[Path]:
    if config.output_dir is None:
        return None
    config.output_dir.mkdir(parents=True, exist_ok=True)
    return config.output_dir / name


def _run_closure(config: ExperimentConfig, report: RunReport) -> None:
    data, run = config.data, config.run
    with stage("load"):
        genealogy = load_genealogy(data["person_csv"], data["relationship_csv"])
    report.dataset = genealogy.stats()

    with stage("closure"):
        program = ClosureProgram.from_text(run["program"] or DEFAULT_PROGRAM)
        ancestor, trace = program.evaluate({"Parent": genealogy.parents}, engine=run["engine"],
                                           max_iters=run["max_iters"])
    trace_path = _output(config, "closure_trace.jsonl")
    if trace_path is not None:
        atomic_write_text(trace_path, "".join(json.dumps(record) + "\n" for record in trace.records()))

    with stage("verify"):
        verification = verify(genealogy.parents, ancestor)

    with stage("lineage"):
        lineages = {}
        for person in run["lineage"]:
            result = lineage(ancestor, genealogy.people, str(person), genealogy.parents, genealogy.display_names)
            lineages[str(person)] = result.to_dict(genealogy.display_names)

    report.results = {
        "program": str(program),
        "closure": {**trace.to_dict(), "nodes": genealogy.stats()["nodes"]},
        "verification": verification.to_dict(),
        "lineage": lineages,
    }


def _run_embed(config: ExperimentConfig, report: RunReport) -> None:
    with stage("load"):
        store = load_countries(config.data["countries"])
    report.dataset = store.stats()
    seeds = [int(seed) for seed in config.run["seeds"]] if config.run["seeds"] else [config.seed]

    runs: List[Dict[str, Any]] = []
    for seed in seeds:
        with stage(f"train seed {seed}"):
            model, curve = train(store, config.embed_config(seed))
        with stage(f"zero-shot seed {seed}"):
            table = zero_shot_table(model)
            accuracy = training_accuracy(model, store)
        runs.append({
            "seed": seed,
            "initial_loss": curve.initial,
            "final_loss": curve.final,
            "training_accuracy": accuracy,
            "zero_shot": [row.to_dict() for row in table],
            "zero_shot_correct": sum(row.correct for row in table),
        })
        model_path = _output(config, f"embed_seed{seed}.npz")
        if model_path is not None:
            save_embed_model(model, model_path)

    report.results = {
        "uniform_loss": math.log(store.num_entities),
        "runs": runs,
        "min_zero_shot_correct": min(run["zero_shot_correct"] for run in runs),
    }


def _load_split(config: ExperimentConfig, report: RunReport) -> DatasetSplit:
    with stage("load"):
        split = load_triples_tsv(config.data["train"], config.data["valid"], config.data["test"])
    report.dataset = split.stats()
    return split


def _run_link_prediction(config: ExperimentConfig, report: RunReport) -> None:
    split = _load_split(config, report)
    with stage("train"):
        model, history = train_superposition(split, config.superposition_config())
    with stage("evaluate"):
        filters = FilterIndex.from_split(split)
        metrics = evaluate_lp(model.scorer(), split.test, filters)
    model_path = _output(config, "superposition.npz")
    if model_path is not None and config.run["save_model"]:
        save_superposition_model(model, model_path)

    report.results = {
        "training": history.to_dict(),
        "test": metrics.to_dict(),
        "random_baseline_mrr": random_baseline_mrr(split.train.num_entities),
    }


def _run_composition(config: ExperimentConfig, report: RunReport) -> None:
    split = _load_split(config, report)
    with stage("benchmark"):
        if config.data["bench"] is not None:
            bench = load_bench(config.data["bench"], split.entities, split.relations)
            reduced = split.train.without(bench.removed_edges)
            logger.info(f"Reusing benchmark {config.data['bench']}")
        else:
            bench, reduced = build_comp_bench(split.train, config.run["n_valid"], config.run["n_test"], config.seed)
            bench_path = _output(config, "bench.jsonl")
            if bench_path is not None:
                save_bench(bench, bench_path, split.entities, split.relations)
                save_triples_tsv(reduced, bench_path.with_name("reduced_train.tsv"))

    filters = FilterIndex.from_split(split)
    reduced_split = DatasetSplit(reduced, split.valid, split.test, split.sources)
    validator = comp_validator(bench, filters) if bench.valid else None
    if validator is None:
        logger.warning("Benchmark has no validation paths; selecting the model by link prediction")
    with stage("train"):
        model, history = train_superposition(reduced_split, config.superposition_config(), validator=validator)
    with stage("evaluate"):
        scorer = model.scorer()
        composition = evaluate_comp(scorer, bench, filters, split="test")
        direct = evaluate_lp(scorer, split.test, filters)
    model_path = _output(config, "superposition.npz")
    if model_path is not None and config.run["save_model"]:
        save_superposition_model(model, model_path)

    report.dataset = {**report.dataset, **bench.stats(), "reduced_train": len(reduced)}
    report.results = {
        "training": history.to_dict(),
        "composition": composition.to_dict(),
        "direct_lp": direct.to_dict(),
        "random_baseline_mrr": random_baseline_mrr(split.train.num_entities),
    }


RUNNERS = {
    "exp1": _run_closure,
    "exp2": _run_embed,
    "exp3a": _run_link_prediction,
    "exp3b": _run_composition,
}


@log(end="Experiment finished in {elapsed}s")
def run_experiment(config: ExperimentConfig) -> RunReport:
    """Run one experiment; failures surface as ExperimentStageError naming the stage"""
    started = time.perf_counter()
    logger.info(f"Running {config.experiment} (seed {config.seed})")
    config.require_data()
    report = RunReport(command=f"run {config.experiment}", config=config.to_dict())
    with stage("hash inputs"):
        report.inputs = hash_inputs(config.data)
    RUNNERS[config.experiment](config, report)
    report.wall_clock_seconds = round(time.perf_counter() - started, 3)

    report_path = _output(config, "report.json")
    if report_path is not None:
        report.write(report_path)
    return report
