"""Acceptance criteria, one test each.

Every test appends one ``PASS``/``FAIL`` line that is printed at the end of
the session.  Criteria that need real datasets read them through the data
manifest (``$REFHDC_DATA_MANIFEST`` or ``data/manifest.json``); when the
dataset is missing the criterion fails with a ``BLOCKED`` line rather than
being skipped.
"""

import contextlib
import json
import os
import subprocess
import sys
from functools import lru_cache

import numpy as np
import pytest

from refhdc import costs
from refhdc.cli import main
from refhdc.config import parse_config
from refhdc.fedsim import FederatedRun, FederationConfig
from refhdc.hdspace import encode_batch
from refhdc.prototype import bundle_init, retrain
from refhdc.runner import execute, records_to_csv

from conftest import ACCEPTANCE_LINES, ROOT, data_manifest, make_blobs, manifest_has

pytestmark = pytest.mark.acceptance


@contextlib.contextmanager
def criterion(number, title):
    try:
        yield
    except BaseException as exc:
        detail = str(exc).strip().splitlines()[0] if str(exc).strip() else type(exc).__name__
        ACCEPTANCE_LINES.append(f"[{number:>2}] FAIL  {title}: {detail}")
        raise
    ACCEPTANCE_LINES.append(f"[{number:>2}] PASS  {title}")


def require(name):
    if not manifest_has(name):
        pytest.fail(f"BLOCKED: dataset {name!r} is not listed in a data manifest", pytrace=False)


@lru_cache(maxsize=None)
def cached_run(doc_json):
    doc = json.loads(doc_json)
    doc["manifest"] = str(data_manifest())
    run, _ = execute(parse_config(doc))
    return run


def har(**fields):
    doc = {"dataset": "uci_har", "N": 20, "partition": "iid", "L": 5, "G": 100,
           "rffm": {"features": 3200, "sigma": 2.5}, "seed": 0}
    doc.update(fields)
    return json.dumps(doc, sort_keys=True)


def best(run):
    return max(r.accuracy for r in run.records)


def test_criterion_01_uci_har_headline():
    with criterion(1, "UCI HAR i.i.d.: baseline D=5K 0.936, RE-FHDC M=5 0.945, both +-0.02"):
        require("uci_har")
        base = best(cached_run(har(method="baseline", D=5000)))
        ours = best(cached_run(har(method="refhdc", D=5000, M=5)))
        assert abs(base - 0.936) <= 0.02, f"baseline max accuracy {base:.4f}"
        assert abs(ours - 0.945) <= 0.02, f"RE-FHDC max accuracy {ours:.4f}"
        assert ours >= base - 0.005, f"RE-FHDC {ours:.4f} below baseline {base:.4f} - 0.005"


def test_criterion_02_uci_har_non_iid():
    with criterion(2, "UCI HAR non-i.i.d. L=3: RE-FHDC D_hat=2.5K 0.922, baseline 0.898, +-0.03"):
        require("uci_har")
        extra = dict(partition="non-iid", classes_per_client=2, L=3, D=5000)
        base = best(cached_run(har(method="baseline", **extra)))
        ours = best(cached_run(har(method="refhdc", M=2, **extra)))
        assert abs(ours - 0.922) <= 0.03, f"RE-FHDC max accuracy {ours:.4f}"
        assert abs(base - 0.898) <= 0.03, f"baseline max accuracy {base:.4f}"


def mnist(**fields):
    doc = {"dataset": "mnist", "N": 20, "partition": "iid", "L": 5, "G": 100,
           "rffm": {"features": 3200, "sigma": 1.0}, "seed": 0}
    doc.update(fields)
    return json.dumps(doc, sort_keys=True)


@pytest.mark.slow
def test_criterion_03_mnist_trend():
    title = "MNIST at D_hat=D=1K: RE-FHDC max >= baseline max - 0.01"
    with criterion(3, title):
        require("mnist")
        # the full 60K training set is opt-in; by default at most 20K rows are used
        limit = None if os.environ.get("REFHDC_MNIST_FULL") else 20000
        base_run = cached_run(mnist(method="baseline", D=1000, train_limit=limit))
        n = sum(c.labels.size for c in base_run.clients)
        base = best(base_run)
        ours = best(cached_run(mnist(method="refhdc", D=5000, M=5, train_limit=limit)))
        assert ours >= base - 0.01, f"RE-FHDC {ours:.4f} vs baseline {base:.4f}"
        if n >= 60000:
            assert abs(ours - 0.969) <= 0.02, f"RE-FHDC max accuracy {ours:.4f}"
            assert abs(base - 0.940) <= 0.02, f"baseline max accuracy {base:.4f}"
            scale = "full scale, table row checked"
        else:
            scale = f"reduced scale, {n} training rows; full-scale table row not checked"
    ACCEPTANCE_LINES.append(f"      RE-FHDC {ours:.4f} vs baseline {base:.4f} ({scale})")


def cost_config(tmp_path, name, **fields):
    path = tmp_path / f"{name}.json"
    doc = {"name": name, "dataset": "mnist", "N": 20, "D": 5000, "G": 100, "L": 5,
           "traffic_bytes_per_element": 8, "storage_bytes_per_element": 4}
    doc.update(fields)
    path.write_text(json.dumps(doc))
    return str(path)


def test_criterion_04_traffic_arithmetic(tmp_path, capsys):
    with criterion(4, "validate-costs: 240 MB baseline, 108 MB (-55%) at D_hat=2.5K, 200 KB model"):
        base = cost_config(tmp_path, "baseline", method="baseline")
        sub = cost_config(tmp_path, "refhdc", method="refhdc", M=2)
        code = main(["validate-costs", "--config", base, "--config", sub,
                     "--rounds", "30", "--rounds", "27", "--format", "json"])
        assert code == 0
        rows = json.loads(capsys.readouterr().out)
        assert rows[0]["uplink_bytes"] == 240_000_000 and rows[0]["uplink_mb"] == "240"
        assert rows[1]["uplink_bytes"] == 108_000_000 and rows[1]["uplink_mb"] == "108"
        assert rows[1]["uplink_delta"] == "-55%"
        assert rows[0]["model_bytes"] == 200_000 and rows[0]["model_kb"] == "200"


def test_criterion_05_cost_identity():
    with criterion(5, "cost_refhdc(M=1, G_R=0, G_T=G) == cost_baseline for 100 random tuples"):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            n, C, D, d, L, G = (int(v) for v in rng.integers(1, [100_000, 100, 20_000, 5000, 10, 200]))
            got = costs.cost_refhdc(n, C, D, d, 1, L, G, 0, D)
            want = costs.cost_baseline(n, C, D, d, L, G)
            assert got == want, f"mismatch at n={n} C={C} D={D} d={d} L={L} G={G}"


def test_criterion_06_distance_concentration():
    with criterion(6, "distance spread over 100 bases: D=4096 below D=256"):
        from test_hdspace import distance_spread

        wide, narrow = distance_spread(4096), distance_spread(256)
        assert wide < narrow, f"std {wide:.4f} at D=4096 vs {narrow:.4f} at D=256"


INVARIANT_TESTS = [
    "tests/test_hdspace.py::test_any_partition_concatenates_exactly",
    "tests/test_hdspace.py::test_two_halves_concatenate_to_full",
    "tests/test_fedsim.py::test_concatenated_prediction_matches_full_distance",
    "tests/test_hdspace.py::test_encode_zero_vector_is_zero",
    "tests/test_hdspace.py::test_cosine_distance_properties",
    "tests/test_prototype.py::test_prediction_scale_invariance",
    "tests/test_prototype.py::test_subset_locality",
    "tests/test_prototype.py::test_correct_epoch_is_noop",
    "tests/test_datasets.py::test_partition_properties",
    "tests/test_datasets.py::test_non_iid_two_classes_each",
]


def test_criterion_07_invariant_suites():
    with criterion(7, "invariant and property suites"):
        proc = subprocess.run(
            [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *INVARIANT_TESTS],
            cwd=ROOT, capture_output=True, text=True,
        )
        summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr
        assert proc.returncode == 0, summary


def test_criterion_08_single_client_identity():
    with criterion(8, "N=1, M=1 federated run equals centralized training bit for bit"):
        data = make_blobs(n_train=500, n_test=200, num_classes=5, dim=12, spread=0.7, seed=8)
        cfg = FederationConfig(num_clients=1, dim=400, num_submodels=1, global_epochs=6,
                               local_epochs=3, master_seed=12)
        run = FederatedRun(cfg, data)
        run.run()
        client = run.clients[0]
        H = encode_batch(run.basis, client.features)
        model = bundle_init(H, client.labels, data.num_classes, cfg.alpha)
        model, _ = retrain(model, H, client.labels, cfg.alpha, cfg.global_epochs * cfg.local_epochs)
        assert np.array_equal(run.model.P, model.P), "final prototypes differ"


def test_criterion_09_thread_determinism(tmp_path):
    with criterion(9, "records.csv byte-identical across --threads 1 and 4"):
        data = make_blobs(n_train=600, n_test=200, num_classes=4, dim=10, spread=0.7, seed=9)
        doc = {"dataset": "blobs", "normalization": "none", "rffm": {"features": 32},
               "N": 6, "D": 600, "M": 3, "D0": 100, "G": 8, "L": 2, "seed": 3}
        outputs = []
        for threads in (1, 4):
            run, _ = execute(parse_config(doc), dataset=data, threads=threads)
            outputs.append(records_to_csv(run.records).encode("utf-8"))
        assert outputs[0] == outputs[1], "records differ between thread counts"


def test_criterion_10_refining_benefit():
    with criterion(10, "UCI HAR i.i.d. G_T=M=5: refined accuracy >= pre-refining accuracy"):
        require("uci_har")
        run = cached_run(har(method="refhdc", D=5000, M=5))
        pre = run.records[4].accuracy
        final = run.records[-1].accuracy
        assert final >= pre, f"final {final:.4f} below pre-refining {pre:.4f}"
