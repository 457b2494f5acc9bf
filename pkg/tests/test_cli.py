"""End-to-end checks for the config-driven command line."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from voed.cli import (
    ConfigError,
    RESULTS_HEADER,
    load_config,
    main,
    parse_config_text,
    parse_design_grid,
    replay,
    resolve_config,
    run,
)

LG_TRUTH = 0.5 * np.log(2.0)


def write_config(tmp_path, text, name="run.config"):
    path = tmp_path / name
    path.write_text(text)
    return path


TINY_LG = """
case = lingauss
estimators = nmc_reuse,lower
nmc.n = 4000
train.n_opt = 2000
train.n_eval = 1000
train.n_batch = 500
train.epochs = 8
train.T = 2
train.widths = 8
out = {out}
seed = 3
"""


def test_parse_config_text_comments_and_errors():
    got = parse_config_text("a.b = 1 # trailing\n# full comment\n\nc = x=y\n")
    assert got == {"a.b": "1", "c": "x=y"}
    with pytest.raises(ConfigError, match="duplicate key"):
        parse_config_text("k = 1\nk = 2\n")
    with pytest.raises(ConfigError, match="expected key = value"):
        parse_config_text("just words\n")


def test_unknown_and_invalid_keys_rejected():
    with pytest.raises(ConfigError, match="unknown config key 'bogus'"):
        resolve_config({"case": "lingauss", "bogus": "1"})
    with pytest.raises(ConfigError, match="invalid value for 'train.epochs'"):
        resolve_config({"case": "lingauss", "train.epochs": "many"})
    with pytest.raises(ConfigError, match="'case'"):
        resolve_config({"case": "case9"})
    with pytest.raises(ConfigError, match="missing required key 'case'"):
        resolve_config({})


def test_case_defaults_follow_published_tables():
    c1 = resolve_config({"case": "case1"})
    assert c1.mode == "grid" and c1.design_grid == "linspace:0:1:11"
    assert c1.train.epochs == 301 and c1.train.T == 5 and c1.train.lr0 == 1e-2
    assert c1.train.widths == (32, 32) and c1.train.n_opt == 20000
    c2 = resolve_config({"case": "case2"})
    assert c2.mode == "joint" and c2.budget == 1_000_000
    assert c2.train.n_batch == 2048 and c2.train.lr0 == 5e-3 and c2.train.T == 4
    c4 = resolve_config({"case": "case4"})
    assert c4.mode == "grid" and c4.design_grid == "ints:0:50"
    assert c4.train.epochs == 51 and c4.estimators == ("lower",)


def test_env_overrides(monkeypatch):
    monkeypatch.setenv("VOED_SEED", "99")
    monkeypatch.setenv("VOED_OUT", "/tmp/elsewhere")
    cfg = resolve_config({"case": "lingauss", "seed": "1", "out": "ignored"})
    assert cfg.seed == 99 and cfg.out == "/tmp/elsewhere"


def test_cross_field_validation():
    with pytest.raises(ConfigError, match="explicit likelihood"):
        resolve_config({"case": "case4", "estimators": "nmc_reuse"})
    with pytest.raises(ConfigError, match="joint optimization"):
        resolve_config({"case": "case1", "mode": "joint"})
    with pytest.raises(ConfigError, match="spsa"):
        resolve_config({"case": "case2", "mode": "spsa"})
    with pytest.raises(ConfigError, match="'estimators'"):
        resolve_config({"case": "case1", "estimators": "typo"})
    with pytest.raises(ConfigError, match="must be positive"):
        resolve_config({"case": "case1", "nmc.n": "0"})
    with pytest.raises(ConfigError, match="training configuration"):
        resolve_config({"case": "lingauss", "train.n_batch": "5000", "train.n_opt": "100"})
    with pytest.raises(ConfigError, match="summary.n_out"):
        resolve_config({"case": "case3", "summary.variant": "sequence"})


def test_parse_design_grid_forms():
    lin = parse_design_grid("linspace:0:1:3")
    assert [v[0] for v in lin] == [0.0, 0.5, 1.0]
    ints = parse_design_grid("ints:2:5")
    assert [v[0] for v in ints] == [2.0, 3.0, 4.0, 5.0]
    lst = parse_design_grid("0.1,0.9")
    assert [v[0] for v in lst] == [0.1, 0.9]


def test_run_byte_identity_and_schema(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    cfg = write_config(tmp_path, TINY_LG.format(out=out_a))
    assert run(cfg) == 0
    assert run(cfg, out_override=out_b) == 0
    bytes_a = (out_a / "results.csv").read_bytes()
    assert bytes_a == (out_b / "results.csv").read_bytes()

    rows = list(csv.reader(bytes_a.decode().splitlines()))
    assert rows[0] == RESULTS_HEADER.split(",")
    assert [r[3] for r in rows[1:]] == ["nmc_reuse", "lower_bound"]
    for r in rows[1:]:
        assert r[0] == "lingauss" and r[1] == "d000"
        assert json.loads(r[2]) == [1.0]
        assert int(r[6]) > 0 and r[8] == "0"  # runtime hidden by default
    # the cheap high-N estimate actually lands near the closed form
    assert abs(float(rows[1][4]) - LG_TRUTH) < 0.05
    # artifacts for the trained estimator
    assert (out_a / "history_d000_lower.csv").exists()
    assert (out_a / "flow_d000_lower.json").exists()


def test_record_runtime_flag(tmp_path):
    out = tmp_path / "rt"
    cfg = write_config(tmp_path, TINY_LG.format(out=out) + "record_runtime = true\n")
    assert run(cfg) == 0
    rows = list(csv.reader((out / "results.csv").read_text().splitlines()))
    lower = [r for r in rows[1:] if r[3] == "lower_bound"][0]
    assert float(lower[8]) > 0.0


def test_invalid_config_exits_2_without_outputs(tmp_path, capsys):
    out = tmp_path / "never"
    cfg = write_config(tmp_path, f"case = lingauss\nbogus = 1\nout = {out}\n")
    assert run(cfg) == 2
    assert "unknown config key 'bogus'" in capsys.readouterr().err
    assert not out.exists()


def test_runtime_failure_exits_1_with_stage(tmp_path, capsys):
    cfg = write_config(tmp_path, "case = lingauss\ndesign = 1.0\nout = /dev/null/nope\n")
    assert run(cfg) == 1
    assert "run failed during setup" in capsys.readouterr().err


def test_validate_prints_resolved_view(tmp_path, capsys):
    cfg = write_config(tmp_path, TINY_LG.format(out=tmp_path / "o"))
    assert main(["validate", str(cfg)]) == 0
    echo = capsys.readouterr().out
    assert "case = lingauss" in echo
    assert "train.epochs = 8" in echo
    assert "design = 1.0" in echo  # case default survives the echo
    bad = write_config(tmp_path, "case = nope\n", name="bad.config")
    assert main(["validate", str(bad)]) == 2


def test_manifest_replay_reproduces_hash(tmp_path):
    out = tmp_path / "orig"
    cfg = write_config(tmp_path, TINY_LG.format(out=out))
    assert run(cfg) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 3
    assert manifest["config"]["train.epochs"] == 8
    assert replay(out / "manifest.json", tmp_path / "again") is True


def test_compare_identical_disjoint_and_mismatch(tmp_path, capsys):
    out = tmp_path / "cmp"
    cfg = write_config(tmp_path, TINY_LG.format(out=out))
    assert run(cfg) == 0
    res = out / "results.csv"
    assert main(["compare", str(res), str(res)]) == 0
    report_text = capsys.readouterr().out
    assert "max |z| = 0" in report_text and "unmatched rows = 0" in report_text

    # rename one design id on a copy: one orphan row on each side
    lines = res.read_text().splitlines()
    moved = [lines[0]] + [ln.replace("d000", "d777", 1) if i == 1 else ln
                          for i, ln in enumerate(lines[1:], 1)]
    other = tmp_path / "other.csv"
    other.write_text("\n".join(moved) + "\n")
    assert main(["compare", str(res), str(other)]) == 0
    report_text = capsys.readouterr().out
    assert "only_a" in report_text and "only_b" in report_text
    assert "unmatched rows = 2" in report_text

    bad = tmp_path / "bad.csv"
    bad.write_text("wrong,header\n1,2\n")
    assert main(["compare", str(res), str(bad)]) == 2
    assert "schema mismatch" in capsys.readouterr().err


def test_grid_run_rows_and_designs(tmp_path):
    out = tmp_path / "grid"
    cfg = write_config(
        tmp_path,
        "case = case1\ndesign_grid = linspace:0:1:3\nestimators = nmc_reuse\n"
        f"nmc.n = 500\nout = {out}\nseed = 5\n",
    )
    assert run(cfg) == 0
    rows = list(csv.DictReader((out / "results.csv").open()))
    assert [json.loads(r["design_json"]) for r in rows] == [[0.0], [0.5], [1.0]]
    assert [r["design_id"] for r in rows] == ["d000", "d001", "d002"]
    seeds = {r["seed"] for r in rows}
    assert len(seeds) == 3  # per-design derived seeds differ


def test_joint_run_outputs(tmp_path):
    out = tmp_path / "joint"
    cfg = write_config(
        tmp_path,
        "case = case2\ncase2.p = 3\ncase2.n = 3\nbudget = 4000\n"
        "train.n_opt = 700\ntrain.n_eval = 300\ntrain.n_batch = 250\n"
        "train.epochs = 8\ntrain.design_epochs = 2\ntrain.T = 2\ntrain.widths = 8\n"
        f"nmc.n = 1000\nout = {out}\nseed = 2\n",
    )
    assert run(cfg) == 0
    rows = list(csv.DictReader((out / "results.csv").open()))
    assert {r["design_id"] for r in rows} == {"joint_final"}
    assert {r["estimator"] for r in rows} == {"lower_bound", "nmc_reuse"}
    d_star = np.asarray(json.loads(rows[0]["design_json"])).reshape(3, 3)
    assert np.all(np.abs(d_star).sum(axis=1) <= 1.0 + 1e-9)
    hist = list(csv.DictReader((out / "history_joint.csv").open()))
    assert len(hist) == 2 and "design_json" in hist[0]


def test_case3_variant_and_sequence_summary(tmp_path):
    out = tmp_path / "c3"
    cfg = write_config(
        tmp_path,
        "case = case3\ncase3.variant = b\nestimators = lower\n"
        "train.n_opt = 900\ntrain.n_eval = 400\ntrain.n_batch = 300\n"
        "train.epochs = 4\ntrain.T = 2\ntrain.widths = 8\n"
        "summary.variant = sequence\nsummary.n_out = 6\nsummary.hidden = 8\n"
        f"summary.emb_widths = 12\nout = {out}\n",
    )
    assert run(cfg) == 0
    rows = list(csv.DictReader((out / "results.csv").open()))
    assert len(rows) == 1
    assert json.loads(rows[0]["design_json"]) == [7.5]  # variant b current density


def test_spsa_run(tmp_path):
    out = tmp_path / "spsa"
    cfg = write_config(
        tmp_path,
        "case = case4\nmode = spsa\ncase4.k = 2\ndesign = 15,30\n"
        "spsa.iters = 2\nspsa.a = 3\nspsa.c = 2\n"
        "train.n_opt = 600\ntrain.n_eval = 300\ntrain.n_batch = 300\n"
        f"train.epochs = 3\ntrain.T = 2\ntrain.widths = 8\nout = {out}\n",
    )
    assert run(cfg) == 0
    rows = list(csv.DictReader((out / "results.csv").open()))
    assert rows[0]["design_id"] == "spsa_final"
    d = json.loads(rows[0]["design_json"])
    assert len(d) == 2 and d == sorted(d) and 0.0 <= d[0] <= 50.0


def test_report_renders_figures(tmp_path):
    out = tmp_path / "rep"
    cfg = write_config(tmp_path, TINY_LG.format(out=out))
    assert run(cfg) == 0
    assert main(["report", str(out)]) == 0
    for name in ("bounds.png", "training.png"):
        png = out / name
        assert png.exists() and png.stat().st_size > 1000
    assert main(["report", str(tmp_path / "missing")]) == 2


def test_main_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])


def test_load_config_missing_file():
    with pytest.raises(ConfigError, match="cannot read config"):
        load_config("/no/such/file.config")
