import json

import pytest

from tensorlogic.cli import EXIT_FAILURE, EXIT_INVALID, EXIT_OK, create_parser, execute


def run_cli(capsys, *argv):
    code = execute(list(argv))
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


def test_parser_requires_a_command():
    with pytest.raises(SystemExit) as info:
        create_parser().parse_args([])
    assert info.value.code == EXIT_INVALID


def test_missing_required_flag_is_invalid_input():
    with pytest.raises(SystemExit) as info:
        execute(["closure", "--person-csv", "persons.csv"])
    assert info.value.code == EXIT_INVALID


def test_closure(capsys, genealogy_files, tmp_path):
    person_csv, relationship_csv = genealogy_files
    trace = tmp_path / "trace.jsonl"
    code, report = run_cli(capsys, "closure", "--persons", str(person_csv), "--relationships",
                           str(relationship_csv), "--lineage", "Dan", "--trace-out", str(trace), "--verify")
    assert code == EXIT_OK
    assert report["command"] == "closure"
    assert report["dataset"] == {"nodes": 6, "edges": 5}
    assert report["results"]["closure"]["final_edges"] == 9
    assert report["results"]["verification"]["passed"] is True
    assert report["results"]["lineage"]["Dan"]["ancestors"] == 3
    assert set(report["inputs"]) == {"person_csv", "relationship_csv"}
    lines = trace.read_text(encoding="utf-8").splitlines()
    assert [json.loads(line)["new_edges"] for line in lines] == [3, 1, 0]


def test_closure_errors(capsys, genealogy_files, tmp_path):
    person_csv, relationship_csv = genealogy_files
    base = ["closure", "--person-csv", str(person_csv), "--relationship-csv", str(relationship_csv)]
    assert execute(base + ["--program", "Ancestor(x,z) :- Ancestor(x,y) Parent(y,z)."]) == EXIT_INVALID
    assert execute(base + ["--max-iters", "1"]) == EXIT_FAILURE
    assert execute(base + ["--lineage", "Nobody"]) == EXIT_INVALID
    missing = ["closure", "--person-csv", str(tmp_path / "none.csv"), "--relationship-csv", str(relationship_csv)]
    assert execute(missing) == EXIT_INVALID
    assert execute(base + ["--rule", "Ancestor(x,y) :- Parent(x,y"]) == EXIT_INVALID
    broken = tmp_path / "broken.csv"
    broken.write_bytes(b"person_id,person_name\nabe_1,\"Abe\n")
    assert execute(["closure", "--persons", str(broken), "--relationships", str(relationship_csv)]) == EXIT_INVALID
    assert capsys.readouterr().out == ""


def test_closure_verification_is_opt_in(capsys, genealogy_files):
    person_csv, relationship_csv = genealogy_files
    code, report = run_cli(capsys, "closure", "--persons", str(person_csv), "--relationship-csv", str(relationship_csv),
                           "--program", "Ancestor(x,z) :- Ancestor(x,y), Parent(y,z).")
    assert code == EXIT_OK
    assert "verification" not in report["results"]
    assert report["results"]["closure"]["final_edges"] == 9


def test_report_out(genealogy_files, tmp_path):
    person_csv, relationship_csv = genealogy_files
    out = tmp_path / "reports" / "closure.json"
    code = execute(["closure", "--person-csv", str(person_csv), "--relationship-csv", str(relationship_csv),
                    "--engine", "naive", "--report-out", str(out)])
    assert code == EXIT_OK
    assert json.loads(out.read_text(encoding="utf-8"))["config"]["engine"] == "naive"


def test_train_and_infer_geo(capsys, countries_file, tmp_path):
    model = tmp_path / "geo.npz"
    code, report = run_cli(capsys, "train-geo", "--countries", str(countries_file), "--epochs", "20", "--dim", "8",
                           "--model-out", str(model))
    assert code == EXIT_OK
    assert report["results"]["epochs"] == 20
    assert model.exists()

    code, report = run_cli(capsys, "infer-geo", "--model", str(model), "--subject", "Tokyo", "--topk", "3")
    assert code == EXIT_OK
    assert report["results"]["chain"] == ["is_capital_of", "is_located_in"]
    assert len(report["results"]["ranking"]) == 3

    assert execute(["infer-geo", "--model", str(model), "--subject", "Atlantis"]) == EXIT_INVALID
    assert execute(["infer-geo", "--model", str(tmp_path / "none.npz"), "--subject", "Tokyo"]) == EXIT_INVALID


def test_knowledge_graph_commands(capsys, composition_split_files, tmp_path):
    train, valid, test = composition_split_files
    bench = tmp_path / "bench.jsonl"
    reduced = tmp_path / "reduced.txt"
    code, report = run_cli(capsys, "build-bench", "--train", str(train), "--n-valid", "3", "--n-test", "3",
                           "--bench-out", str(bench), "--reduced-train-out", str(reduced))
    assert code == EXIT_OK
    assert report["dataset"]["reduced_train"] == report["dataset"]["train"] - 6
    assert len(reduced.read_text(encoding="utf-8").splitlines()) == report["dataset"]["reduced_train"]

    model = tmp_path / "kg.npz"
    code, report = run_cli(capsys, "train-kg", "--train", str(train), "--valid", str(valid), "--test", str(test),
                           "--dim", "8", "--epochs", "2", "--validate-every", "1", "--batch", "16",
                           "--remove-edges", str(bench), "--model-out", str(model))
    assert code == EXIT_OK
    assert len(report["results"]["training"]["validation"]) == 2

    code, report = run_cli(capsys, "eval-comp", "--model", str(model), "--bench", str(bench),
                           "--filter-splits", str(valid), str(test))
    assert code == EXIT_OK
    assert report["results"]["test"]["count"] == 3

    code, report = run_cli(capsys, "eval-kg", "--model", str(model), "--test", str(test), "--filter-splits", str(valid))
    assert code == EXIT_OK
    assert report["results"]["test"]["count"] == 4
    assert 0.0 < report["results"]["random_baseline_mrr"] < 1.0

    code, report = run_cli(capsys, "compose-predict", "--model", str(model), "--head", "person0", "--r1", "born_in",
                           "--r2", "city_of", "--topk", "4")
    assert code == EXIT_OK
    assert len(report["results"]["ranking"]) == 4

    assert execute(["build-bench", "--train", str(train), "--n-valid", "50", "--n-test", "50",
                    "--bench-out", str(tmp_path / "big.jsonl")]) == EXIT_FAILURE


@pytest.mark.parametrize("kind", ["embed", "superposition"])
def test_gradcheck(capsys, kind):
    code, report = run_cli(capsys, "gradcheck", "--model-kind", kind)
    assert code == EXIT_OK
    assert report["results"]["passed"] is True
    assert report["results"]["max_relative_error"] < 1e-4


def test_gradcheck_failure_still_reports(capsys):
    code, report = run_cli(capsys, "gradcheck", "--tolerance", "0")
    assert code == EXIT_FAILURE
    assert report["results"]["passed"] is False


def test_run_experiment_from_config(capsys, genealogy_files, tmp_path):
    person_csv, relationship_csv = genealogy_files
    config = tmp_path / "exp1.json"
    config.write_text(json.dumps({
        "experiment": "exp1",
        "data": {"person_csv": str(person_csv), "relationship_csv": str(relationship_csv)},
        "run": {"lineage": ["Abe"]},
    }), encoding="utf-8")
    output = tmp_path / "runs"
    code, report = run_cli(capsys, "run", "--config", str(config), "--output-dir", str(output),
                           "--set", "run.engine=naive")
    assert code == EXIT_OK
    assert report["config"]["run"]["engine"] == "naive"
    assert report["results"]["lineage"]["Abe"]["descendants"] == 5
    assert (output / "report.json").exists()
    assert (output / "closure_trace.jsonl").exists()

    assert execute(["run", "--config", str(config), "--set", "run.engin=naive"]) == EXIT_INVALID
    assert execute(["run", "--config", str(tmp_path / "missing.json")]) == EXIT_INVALID


def test_build_bench_rejects_unusable_input(composition_split_files, tmp_path):
    train, _, _ = composition_split_files
    out = ["--bench-out", str(tmp_path / "bench.jsonl")]
    assert execute(["build-bench", "--train", str(train), "--n-valid", "0", "--n-test", "3"] + out) == EXIT_INVALID
    garbled = tmp_path / "garbled.txt"
    garbled.write_bytes(train.read_bytes() + b"\xff\tborn_in\tcity0\n")
    assert execute(["build-bench", "--train", str(garbled), "--n-valid", "1", "--n-test", "1"] + out) == EXIT_INVALID


def test_train_kg_without_validation_paths_falls_back_to_link_prediction(capsys, composition_split_files, tmp_path):
    train, valid, test = composition_split_files
    bench = tmp_path / "bench.jsonl"
    code, _ = run_cli(capsys, "build-bench", "--train", str(train), "--n-valid", "1", "--n-test", "2",
                      "--bench-out", str(bench))
    assert code == EXIT_OK
    header, *records = [json.loads(line) for line in bench.read_text(encoding="utf-8").splitlines()]
    header.update(n_valid=0, n_test=3)
    rewritten = [header] + [{**record, "split": "test"} for record in records]
    bench.write_text("".join(json.dumps(line) + "\n" for line in rewritten), encoding="utf-8")

    code, report = run_cli(capsys, "train-kg", "--train", str(train), "--valid", str(valid), "--test", str(test),
                           "--dim", "8", "--epochs", "2", "--validate-every", "1", "--batch", "16",
                           "--remove-edges", str(bench))
    assert code == EXIT_OK
    assert len(report["results"]["training"]["validation"]) == 2
