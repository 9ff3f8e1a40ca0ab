"""Command-line entry points: config parsing, dispatch, metrics files."""

import json

import numpy as np
import pytest

from ckgconv.cli import (
    ExperimentConfig,
    check_toy_edge_detection,
    check_toy_smoothing,
    main,
    parse_config,
    write_metrics,
)
from ckgconv.coords import rrwp
from ckgconv.errors import ConfigParseError, UnknownFieldError
from ckgconv.graph import build_graph, graph_to_json


def write_graph(tmp_path, name, g):
    path = tmp_path / name
    path.write_text(graph_to_json(g))
    return str(path)


PATH4 = build_graph(4, [(0, 1), (1, 2), (2, 3)])
STAR4 = build_graph(4, [(0, 1), (0, 2), (0, 3)])


# -- config parsing ---------------------------------------------------------------

def test_parse_config_minimal_defaults():
    cfg = parse_config('{"experiment": "toy-smoothing"}')
    assert cfg.experiment == "toy-smoothing"
    assert cfg.seeds == [0, 1, 2, 3, 4]
    assert cfg.epochs is None
    assert cfg.pe_k == 5


def test_parse_config_rejects_unknown_fields():
    with pytest.raises(UnknownFieldError):
        parse_config('{"experiment": "toy-smoothing", "lerning_rate": 0.1}')


def test_parse_config_rejects_malformed_input():
    with pytest.raises(ConfigParseError):
        parse_config("{not json")
    with pytest.raises(ConfigParseError):
        parse_config("[1, 2]")
    with pytest.raises(ConfigParseError):
        parse_config("{}")
    with pytest.raises(ConfigParseError):
        parse_config('{"experiment": "imagenet"}')
    with pytest.raises(ConfigParseError):
        parse_config('{"experiment": "wl-probe", "method": "wl5"}')
    with pytest.raises(ConfigParseError):
        parse_config('{"experiment": "pe-dump", "pe_kind": "laplacian"}')


def test_config_error_reported_on_stderr(tmp_path, capsys):
    cfg_path = tmp_path / "bad.json"
    cfg_path.write_text('{"experiment": "toy-smoothing", "lerning_rate": 0.1}')
    code = main(["run", "--config", str(cfg_path)])
    captured = capsys.readouterr()
    assert code == 1
    assert "config error:" in captured.err
    assert "lerning_rate" in captured.err


# -- pe-dump ------------------------------------------------------------------------

def test_pe_dump_prints_field_values(tmp_path, capsys):
    gpath = write_graph(tmp_path, "path4.json", PATH4)
    code = main(["pe-dump", "--graph", gpath, "--kind", "rrwp", "--k", "3"])
    captured = capsys.readouterr()
    assert code == 0
    payload = json.loads(captured.out)
    assert payload["kind"] == "rrwp"
    assert payload["k"] == 3
    assert payload["rescaled"] is False
    np.testing.assert_allclose(
        np.array(payload["values"]), rrwp(PATH4, 3).values, atol=0
    )


def test_pe_dump_rescale_flag(tmp_path, capsys):
    gpath = write_graph(tmp_path, "path4.json", PATH4)
    main(["pe-dump", "--graph", gpath, "--k", "2", "--rescale"])
    payload = json.loads(capsys.readouterr().out)
    assert payload["rescaled"] is True
    np.testing.assert_allclose(
        np.array(payload["values"]), rrwp(PATH4, 2, rescale=True).values, atol=0
    )


def test_pe_dump_writes_file(tmp_path):
    gpath = write_graph(tmp_path, "path4.json", PATH4)
    out = tmp_path / "field.jsonl"
    code = main(["pe-dump", "--graph", gpath, "--k", "2", "--out", str(out)])
    assert code == 0
    record = json.loads(out.read_text().strip())
    assert record["kind"] == "rrwp"


# -- wl probe -------------------------------------------------------------------------

def test_wl_builtin_pair_blind_and_sighted(capsys):
    assert main(["wl", "--pair", "c6-vs-2c3", "--method", "wl1"]) == 0
    blind = json.loads(capsys.readouterr().out)
    assert blind["distinguished"] is False
    assert blind["round"] is None

    assert main(["wl", "--pair", "c6-vs-2c3", "--method", "gdwl-spd"]) == 0
    sighted = json.loads(capsys.readouterr().out)
    assert sighted["distinguished"] is True
    assert sighted["round"] == 1


def test_wl_custom_graph_files(tmp_path, capsys):
    g1 = write_graph(tmp_path, "a.json", PATH4)
    g2 = write_graph(tmp_path, "b.json", STAR4)
    assert main(["wl", "--g1", g1, "--g2", g2, "--method", "wl1"]) == 0
    record = json.loads(capsys.readouterr().out)
    assert record["distinguished"] is True
    assert record["variant"] == "wl1"


# -- toy + run ---------------------------------------------------------------------

def test_toy_command_writes_metrics_jsonl(tmp_path, capsys):
    out = tmp_path / "metrics.jsonl"
    code = main(["toy", "edge-detection", "--seeds", "2", "--out", str(out)])
    capsys.readouterr()
    assert code == 0
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 4 * 2  # four variants, two seeds
    for line in lines:
        record = json.loads(line)
        assert set(record) == {
            "experiment",
            "variant",
            "seed",
            "epoch_final",
            "loss",
            "accuracy",
        }
        assert record["experiment"] == "toy-edge-detection"


def test_run_config_controls_epochs_and_variants(tmp_path, capsys):
    cfg = {
        "experiment": "toy-edge-detection",
        "seeds": [0],
        "epochs": 15,
        "variants": ["softplus"],
        "output": str(tmp_path / "m.jsonl"),
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    assert main(["run", "--config", str(cfg_path)]) == 0
    capsys.readouterr()
    records = [
        json.loads(line)
        for line in (tmp_path / "m.jsonl").read_text().strip().splitlines()
    ]
    assert len(records) == 1
    assert records[0]["variant"] == "softplus"
    assert records[0]["epoch_final"] == 15


def test_repeated_runs_are_byte_identical(tmp_path, capsys):
    template = {
        "experiment": "toy-edge-detection",
        "seeds": [0, 1],
        "epochs": 25,
        "variants": ["softmax", "softplus"],
    }
    outputs = []
    for name in ("a.jsonl", "b.jsonl"):
        cfg = dict(template, output=str(tmp_path / name))
        cfg_path = tmp_path / f"cfg_{name}.json"
        cfg_path.write_text(json.dumps(cfg))
        assert main(["run", "--config", str(cfg_path)]) == 0
        outputs.append((tmp_path / name).read_bytes())
    capsys.readouterr()
    assert outputs[0] == outputs[1]


def test_thread_fanout_does_not_change_bytes(tmp_path, capsys, monkeypatch):
    template = {
        "experiment": "toy-edge-detection",
        "seeds": [0, 1, 2],
        "epochs": 20,
        "variants": ["softplus"],
    }
    blobs = []
    for threads, name in (("1", "t1.jsonl"), ("3", "t3.jsonl")):
        monkeypatch.setenv("CKG_THREADS", threads)
        cfg = dict(template, output=str(tmp_path / name))
        cfg_path = tmp_path / f"cfg_{name}.json"
        cfg_path.write_text(json.dumps(cfg))
        assert main(["run", "--config", str(cfg_path)]) == 0
        blobs.append((tmp_path / name).read_bytes())
    capsys.readouterr()
    assert blobs[0] == blobs[1]


# -- result validators ---------------------------------------------------------------

def synthetic_smoothing_records():
    records = []
    for variant, loss, acc in (
        ("gcn-depth2", 0.01, 1.0),
        ("gcn-depth6", 0.6931, 0.5),
        ("ckgcn-depth2", 1e-5, 1.0),
        ("ckgcn-depth6", 1e-9, 1.0),
    ):
        for seed in range(5):
            records.append(
                {
                    "experiment": "toy-smoothing",
                    "variant": variant,
                    "seed": seed,
                    "epoch_final": 200,
                    "loss": loss,
                    "accuracy": acc,
                }
            )
    return records


def synthetic_edge_records():
    records = []
    table = (
        ("ckgconv", 1e-5, 1.0),
        ("gcnconv", 0.6931, 0.5),
        ("softmax", 0.6931, 0.5),
        ("softplus", 0.6931, 0.5),
    )
    for variant, loss, acc in table:
        for seed in range(5):
            records.append(
                {
                    "experiment": "toy-edge-detection",
                    "variant": variant,
                    "seed": seed,
                    "epoch_final": 200,
                    "loss": loss,
                    "accuracy": acc,
                }
            )
    return records


def test_validators_accept_expected_tables():
    assert check_toy_smoothing(synthetic_smoothing_records()) == []
    assert check_toy_edge_detection(synthetic_edge_records()) == []


def test_validators_flag_deviations():
    bad = synthetic_smoothing_records()
    for record in bad:
        if record["variant"] == "ckgcn-depth6":
            record["accuracy"] = 0.5
    assert check_toy_smoothing(bad) != []

    bad_edge = synthetic_edge_records()
    for record in bad_edge:
        if record["variant"] == "softmax":
            record["accuracy"] = 1.0  # constrained family must not solve it
    assert check_toy_edge_detection(bad_edge) != []


def test_check_is_a_pure_function_of_the_metrics(tmp_path):
    """The verdict depends only on the records, not on how they were made."""
    records = synthetic_smoothing_records()
    path = tmp_path / "m.jsonl"
    write_metrics(records, str(path))
    loaded = [json.loads(line) for line in path.read_text().strip().splitlines()]
    assert check_toy_smoothing(loaded) == []
    # Tamper with the file. One bad seed is tolerated (the table asks for
    # four of five), two are not.
    loaded[0]["accuracy"] = 0.0
    assert check_toy_smoothing(loaded) == []
    loaded[1]["accuracy"] = 0.0
    assert check_toy_smoothing(loaded) != []


def test_experiment_config_dataclass_defaults():
    cfg = ExperimentConfig(experiment="pe-dump")
    assert cfg.pe_kind == "rrwp"
    assert cfg.rescale is False
    assert cfg.output is None
