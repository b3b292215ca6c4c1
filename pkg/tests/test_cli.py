import json
import os

import numpy as np
import pytest

import main as cli
from core.data_parser import DataParser, ResultTable, check_registry
from core.exceptions import NumericalFailure, UsageError
from core.manager import ExperimentManager, substream, substream_seed, two_term_infidelity
from core.query import REGISTRY


def read_bytes(path: str) -> bytes:
    with open(path, "rb") as f:
        return f.read()


def run_experiment(name: str, out: str, seed: int = 0, workers: int = 1, executor: str = "process",
                   plot: bool = False, **flags):
    spec = DataParser.build_spec(name, flags=flags, seed=seed, output_dir=out, plot=plot)
    table = ExperimentManager(workers=workers, executor=executor).run(spec)
    return table, os.path.join(out, f"{name}.csv")


def test_registry_is_complete_and_tagged():
    check_registry()
    assert len(REGISTRY) >= 10
    for name, entry in REGISTRY.items():
        assert entry["tags"], name
        assert entry["columns"], name
        for spec in entry["params"].values():
            assert set(spec) == {"type", "fast", "full", "help"}


def test_registry_schema_is_json_serializable():
    schema = DataParser.registry_schema()
    assert json.loads(json.dumps(schema)) == schema
    assert set(schema) == set(REGISTRY)


def test_parse_flag_tokens():
    flags = DataParser.parse_flag_tokens(["--t1-list", "1e-5,3e-5", "--cooperate", "--chi=-2.0", "--p", "-0.5"])
    assert flags == {"t1_list": "1e-5,3e-5", "cooperate": "true", "chi": "-2.0", "p": "-0.5"}
    with pytest.raises(UsageError):
        DataParser.parse_flag_tokens(["valore"])


def test_build_spec_precedence():
    config = {"params": {"p1": 0.01, "q_values": [0.1]}, "seed": 9, "preset": "full"}
    spec = DataParser.build_spec("tetra-witness", flags={"q_values": "0.2,0.3"}, config=config)
    assert spec.params["q_values"] == [0.2, 0.3]
    assert spec.params["p1"] == pytest.approx(0.01)
    assert spec.params["p2"] == 0.0
    assert spec.seed == 9
    assert spec.preset == "full"
    assert DataParser.build_spec("tetra-witness", config=config, seed=4).seed == 4


def test_build_spec_errors():
    with pytest.raises(UsageError):
        DataParser.build_spec("inesistente")
    with pytest.raises(UsageError):
        DataParser.build_spec("tetra-witness", flags={"bogus": "1"})
    with pytest.raises(UsageError):
        DataParser.build_spec("tetra-witness", seed=2 ** 64)
    with pytest.raises(UsageError):
        DataParser.build_spec("tetra-witness", preset="medium")
    with pytest.raises(UsageError):
        DataParser.build_spec("tetra-teleport", flags={"samples": "1.5"})
    with pytest.raises(UsageError):
        DataParser.build_spec("tetra-witness", tolerances={"max_step": 1.0})


def test_boolean_and_list_coercion():
    assert DataParser.coerce("cooperate", "bool", "si") is True
    assert DataParser.coerce("cooperate", "bool", "false") is False
    assert DataParser.coerce("alphas", "float-list", "1, 2,") == [1.0, 2.0]
    with pytest.raises(UsageError):
        DataParser.coerce("p", "float", "nan")


def test_spec_survives_config_round_trip(tmp_path):
    spec = DataParser.build_spec("parity-tradeoff", flags={"eta1": "0.02"}, seed=17, output_dir=str(tmp_path))
    path = tmp_path / "run.json"
    path.write_text(json.dumps(DataParser.spec_to_config(spec)), encoding="utf-8")
    again = DataParser.build_spec("parity-tradeoff", config=DataParser.load_config(str(path)))
    assert again == spec


def test_flat_config_file_is_accepted(tmp_path):
    path = tmp_path / "flat.json"
    path.write_text(json.dumps({"samples": 10, "seed": 3}), encoding="utf-8")
    spec = DataParser.build_spec("tetra-teleport", config=DataParser.load_config(str(path)))
    assert spec.params["samples"] == 10
    assert spec.seed == 3
    with pytest.raises(UsageError):
        DataParser.load_config(str(tmp_path / "manca.json"))


def test_result_table_validation():
    with pytest.raises(UsageError):
        ResultTable(columns=["a", "b"], rows=[[1.0]])
    with pytest.raises(UsageError):
        ResultTable(columns=["a"], rows=[[float("nan")]])
    assert DataParser.format_value(1 / 3) == "3.33333333333e-01"


def test_substreams_are_independent_and_reproducible():
    assert substream_seed(5, "a") == substream_seed(5, "a")
    assert substream_seed(5, "a") != substream_seed(5, "b")
    assert substream_seed(5, "a") != substream_seed(6, "a")
    np.testing.assert_array_equal(substream(1, "x").random(4), substream(1, "x").random(4))


def test_two_term_model():
    assert two_term_infidelity(2.0, 10.0, kappa=1.0, a_coef=4.0, b_coef=5.0) == pytest.approx(1.0 + 1.0)


def test_dispersive_phase_run_writes_table_and_metadata(tmp_path):
    out = str(tmp_path)
    table, csv_path = run_experiment("dispersive-phase", out, chi_over_kappa="0.5")
    assert table.column("delta_phi")[0] == pytest.approx(np.pi)
    with open(csv_path, encoding="utf-8") as f:
        assert f.readline().strip() == "chi_over_kappa,phi_plus,phi_minus,delta_phi"
    with open(os.path.join(out, "dispersive-phase.meta.json"), encoding="utf-8") as f:
        meta = json.load(f)
    assert meta["seed"] == 0
    assert meta["tags"] == REGISTRY["dispersive-phase"]["tags"]
    assert isinstance(meta["warnings"], list)


def test_same_seed_gives_identical_bytes(tmp_path):
    _, first = run_experiment("tetra-teleport", str(tmp_path / "a"), seed=11, samples="40")
    _, second = run_experiment("tetra-teleport", str(tmp_path / "b"), seed=11, samples="40")
    _, other = run_experiment("tetra-teleport", str(tmp_path / "c"), seed=12, samples="40")
    assert read_bytes(first) == read_bytes(second)
    assert read_bytes(first) != read_bytes(other)


def test_worker_count_does_not_change_results(tmp_path):
    flags = {"q_values": "0.0,0.01,0.03"}
    _, serial = run_experiment("tetra-witness", str(tmp_path / "serial"), **flags)
    _, threaded = run_experiment("tetra-witness", str(tmp_path / "threaded"), workers=2, executor="thread",
                                 **flags)
    assert read_bytes(serial) == read_bytes(threaded)


def test_plots_are_reproducible(tmp_path):
    table, _ = run_experiment("dispersive-phase", str(tmp_path / "a"), plot=True)
    again, _ = run_experiment("dispersive-phase", str(tmp_path / "b"), plot=True)
    assert os.path.exists(table.metadata["svg"])
    assert read_bytes(table.metadata["svg"]) == read_bytes(again.metadata["svg"])


def test_manager_rejects_unknown_executor():
    with pytest.raises(UsageError):
        ExperimentManager(workers=1, executor="gpu")


def test_main_list_json(capsys):
    assert cli.main(["list", "--json"]) == cli.EXIT_OK
    schema = json.loads(capsys.readouterr().out)
    assert "tetra-witness" in schema


def test_main_run_and_usage_errors(tmp_path, capsys):
    out = str(tmp_path)
    code = cli.main(["run", "dispersive-phase", "--out", out, "--workers", "1", "--chi-over-kappa", "0.5,1.0"])
    assert code == cli.EXIT_OK
    assert os.path.exists(os.path.join(out, "dispersive-phase.csv"))

    assert cli.main(["run", "inesistente", "--out", out]) == cli.EXIT_USAGE
    assert "Errore nel modulo cli:" in capsys.readouterr().err
    assert cli.main(["run", "dispersive-phase", "--out", out, "--bogus", "1"]) == cli.EXIT_USAGE


def test_main_reports_numerical_failures(tmp_path, capsys, monkeypatch):
    def failing_run(self, spec):
        raise NumericalFailure("passo troppo piccolo", "dynamics", time=1e-6)

    monkeypatch.setattr(ExperimentManager, "run", failing_run)
    code = cli.main(["run", "vacuum-rabi", "--out", str(tmp_path), "--workers", "1"])
    assert code == cli.EXIT_NUMERICAL
    err = capsys.readouterr().err
    assert "Errore nel modulo dynamics: passo troppo piccolo" in err


@pytest.mark.parametrize("argv", [[], ["run", "dispersive-phase", "--seed", "abc"], ["run"], ["list", "--bogus"],
                                  ["run", "dispersive-phase", "--workers", "due"]])
def test_argument_errors_exit_with_usage_code(argv, capsys):
    assert cli.main(argv) == cli.EXIT_USAGE
    assert "Errore nel modulo cli:" in capsys.readouterr().err


def read_meta(out: str, name: str) -> dict:
    with open(os.path.join(out, f"{name}.meta.json"), encoding="utf-8") as f:
        return json.load(f)


@pytest.mark.parametrize("convention, mixing", [("closed-form", "delta = erfc(sqrt(N_eta))"),
                                                ("mixture", "delta = erfc(sqrt(N_eta)) / 2")])
def test_qwp_run_records_xstate_convention(convention, mixing, tmp_path):
    out = str(tmp_path)
    table, _ = run_experiment("qwp-concurrence", out, convention=convention)
    summary = read_meta(out, "qwp-concurrence")["summary"]
    assert summary["xstate_convention"] == convention
    assert summary["xstate_mixing"] == mixing
    if convention == "closed-form":
        assert summary["max_gap"] < 1e-10
    else:
        assert all(w >= c for c, w in zip(table.column("concurrence"), table.column("concurrence_wootters")))


def test_feasibility_run_records_internal_loss_formula(tmp_path):
    out = str(tmp_path)
    table, _ = run_experiment("feasibility", out)
    assert table.column("internal_loss_term")[0] == pytest.approx(0.011, abs=5e-4)
    summary = read_meta(out, "feasibility")["summary"]
    assert summary["internal_loss_formula"] == "alpha^2 kappa_int^2 / (4 chi^2)"
    assert summary["internal_loss_reference"] == 0.004
