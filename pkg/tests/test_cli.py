import csv
import json
import struct

import numpy as np
import pytest

from refhdc.cli import main
from refhdc.runner import RECORD_FIELDS


def write_idx(path, array, magic):
    path.write_bytes(struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape)
                     + array.astype(np.uint8).tobytes())


@pytest.fixture(scope="module")
def manifest(tmp_path_factory):
    root = tmp_path_factory.mktemp("digits")
    rng = np.random.default_rng(0)
    templates = rng.integers(0, 256, (3, 28, 28))
    entry = {"format": "idx"}
    for split, n in (("train", 180), ("test", 60)):
        y = np.arange(n) % 3
        x = np.clip(templates[y] + rng.normal(0, 60, (n, 28, 28)), 0, 255)
        write_idx(root / f"{split}-images", x, 0x803)
        write_idx(root / f"{split}-labels", y, 0x801)
        entry[f"{split}_images"] = f"{split}-images"
        entry[f"{split}_labels"] = f"{split}-labels"
    path = root / "manifest.json"
    path.write_text(json.dumps({"digits": entry}))
    return path


def config(tmp_path, manifest, **extra):
    doc = {
        "dataset": "digits", "manifest": str(manifest), "normalization": "unit-norm",
        "rffm": {"features": 64, "sigma": 1.0}, "N": 3, "D": 120, "M": 3, "G": 5, "L": 2,
        "seed": 4,
    }
    doc.update(extra)
    path = tmp_path / f"cfg{len(list(tmp_path.glob('cfg*')))}.json"
    path.write_text(json.dumps(doc))
    return path


def test_run_writes_reports(tmp_path, manifest, capsys):
    out = tmp_path / "run"
    assert main(["run", "--config", str(config(tmp_path, manifest)), "--out", str(out)]) == 0
    text = (out / "records.csv").read_bytes().decode("utf-8")
    assert "\r" not in text
    lines = text.splitlines()
    assert lines[0] == ",".join(RECORD_FIELDS) == "round,stage,accuracy,uplink_bytes,cum_uplink_bytes,cum_flops,seconds"
    assert len(lines) == 1 + 5
    summary = json.loads((out / "summary.json").read_text())
    assert summary["rounds"] == 5 and summary["total_flops"] == summary["closed_form_flops"]
    eff = json.loads((out / "effective-config.json").read_text())
    assert eff["training_epochs"] == 3 and eff["refining_epochs"] == 2 and eff["master_seed"] == 4
    assert (out / "accuracy.png").stat().st_size > 0 and (out / "model.json").exists()
    assert json.loads(capsys.readouterr().out)["max_accuracy"] > 0.5


def test_invalid_config_writes_nothing(tmp_path, manifest, capsys):
    out = tmp_path / "never"
    bad = config(tmp_path, manifest, D=5000, M=3, alpha="x")
    assert main(["run", "--config", str(bad), "--out", str(out)]) == 2
    err = capsys.readouterr().err
    assert "num_submodels" in err and "M=3 must divide D=5000" in err and "alpha" in err
    assert not out.exists()


def test_unknown_field_rejected(tmp_path, manifest, capsys):
    assert main(["run", "--config", str(config(tmp_path, manifest, depth=3)), "--out", str(tmp_path / "o")]) == 2
    assert "depth: unknown field" in capsys.readouterr().err


def test_rerun_is_byte_identical(tmp_path, manifest):
    cfg = str(config(tmp_path, manifest))
    main(["run", "--config", cfg, "--out", str(tmp_path / "a"), "--no-plot"])
    main(["run", "--config", cfg, "--out", str(tmp_path / "b"), "--no-plot", "--threads", "3"])
    assert (tmp_path / "a" / "records.csv").read_bytes() == (tmp_path / "b" / "records.csv").read_bytes()
    main(["run", "--config", cfg, "--out", str(tmp_path / "c"), "--no-plot", "--seed", "5"])
    assert (tmp_path / "a" / "records.csv").read_bytes() != (tmp_path / "c" / "records.csv").read_bytes()


def test_wall_clock_fills_seconds(tmp_path, manifest):
    main(["run", "--config", str(config(tmp_path, manifest)), "--out", str(tmp_path / "w"),
          "--no-plot", "--wall-clock"])
    rows = list(csv.DictReader(open(tmp_path / "w" / "records.csv")))
    assert all(float(r["seconds"]) >= 0 for r in rows)


def fake_run(path, accs, per_round, name):
    path.mkdir()
    lines = [",".join(RECORD_FIELDS)]
    for i, acc in enumerate(accs, start=1):
        lines.append(f"{i},train-1,{acc},{per_round},{per_round * i},{i},")
    (path / "records.csv").write_text("\n".join(lines) + "\n")
    (path / "summary.json").write_text(json.dumps({"name": name, "method": "x"}))
    return path


def test_compare(tmp_path, capsys):
    base = fake_run(tmp_path / "base", np.linspace(0.5, 0.9, 30).tolist() + [0.85] * 70, 8_000_000, "baseline")
    fast = fake_run(tmp_path / "fast", [0.6] * 26 + [0.95] * 74, 4_000_000, "refhdc")
    slow = fake_run(tmp_path / "slow", [0.5] * 100, 8_000_000, "weak")
    out = tmp_path / "cmp"
    assert main(["compare", str(base), str(fast), str(slow), str(base), "--out", str(out)]) == 0
    rows = json.loads((out / "compare.json").read_text())
    assert rows[0]["rounds_to_target"] == "30" and rows[0]["uplink_mb"] == "240"
    assert rows[0]["uplink_delta"] == "0%" and rows[3]["uplink_delta"] == "0%"
    assert rows[1]["rounds_to_target"] == "27" and rows[1]["uplink_mb"] == "108"
    assert rows[1]["uplink_delta"] == "-55%"
    assert rows[2]["rounds_to_target"] == "100+" and rows[2]["uplink_mb"] == "800+"
    assert (out / "trajectories.png").stat().st_size > 0
    assert capsys.readouterr().out.startswith("run,method,max_accuracy")


def test_compare_reference_flag(tmp_path, capsys):
    a = fake_run(tmp_path / "a", [0.5, 0.7], 10, "a")
    b = fake_run(tmp_path / "b", [0.6, 0.9], 10, "b")
    main(["compare", str(a), "--reference", str(b)])
    row = list(csv.DictReader(capsys.readouterr().out.splitlines()))[0]
    assert row["target_accuracy"] == "0.9" and row["rounds_to_target"] == "2+"


def cost_config(tmp_path, name, **fields):
    path = tmp_path / f"{name}.json"
    doc = {"name": name, "dataset": "mnist", "N": 20, "D": 5000, "G": 100, "L": 5}
    doc.update(fields)
    path.write_text(json.dumps(doc))
    return str(path)


def test_validate_costs(tmp_path, capsys):
    base = cost_config(tmp_path, "base", method="baseline")
    sub = cost_config(tmp_path, "sub", M=2)
    assert main(["validate-costs", "--config", base, "--config", sub, "--rounds", "30", "--rounds", "27",
                 "--format", "json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert rows[0]["uplink_bytes"] == 240_000_000 and rows[0]["uplink_mb"] == "240"
    assert rows[1]["uplink_bytes"] == 108_000_000 and rows[1]["uplink_delta"] == "-55%"
    assert rows[0]["model_kb"] == "200"


def test_validate_costs_degenerate(tmp_path, capsys):
    one = cost_config(tmp_path, "one", M=1, G_T=100)
    full = cost_config(tmp_path, "full", M=5, D0=5000)
    main(["validate-costs", "--config", one, "--config", full, "--format", "json"])
    rows = json.loads(capsys.readouterr().out)
    assert rows[0]["flops"] == rows[0]["baseline_flops"]
    assert rows[1]["refine_round_bytes"] == 20 * 10 * 5000 * 8


def test_validate_costs_bad_rounds(tmp_path, capsys):
    assert main(["validate-costs", "--config", cost_config(tmp_path, "x"), "--rounds", "101"]) == 2
