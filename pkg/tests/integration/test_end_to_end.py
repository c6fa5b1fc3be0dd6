"""End-to-end tests: gen, train and search through the command functions."""

import csv
import io

import pytest

from nibblescan._types import GroundTruth
from nibblescan.cli import EXIT_OK, main
from nibblescan.dataset import read_ivecs, recall_at_1
from nibblescan.ivf import load

pytestmark = pytest.mark.integration


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("e2e")
    data = root / "data"
    gen = ["gen", "--synthetic", "3000,16,30", "--queries", "50", "--seed", "9"]
    assert main([*gen, "--out", str(data)]) == EXIT_OK
    index = root / "index.pqfs"
    train = ["train", "--data", str(data / "base.fvecs"), "--m", "8", "--iters", "8"]
    assert main([*train, "--seed", "2", "--out", str(index)]) == EXIT_OK
    return data, index


def _search(workspace, capsys, *extra):
    data, index = workspace
    capsys.readouterr()
    code = main(
        [
            "search",
            "--index",
            str(index),
            "--queries",
            str(data / "query.fvecs"),
            "--gt",
            str(data / "groundtruth.ivecs"),
            "--trials",
            "1",
            *extra,
        ]
    )
    assert code == EXIT_OK
    return list(csv.DictReader(io.StringIO(capsys.readouterr().out)))


def test_default_nlist_is_sqrt_of_base(workspace):
    index = load(workspace[1])
    assert index.nlist == 55  # round(sqrt(3000))
    assert index.ntotal == 3000


def test_nprobe_sweep_rows(workspace, capsys):
    rows = _search(workspace, capsys, "--nprobe", "1,2,4")
    assert [int(r["nprobe"]) for r in rows] == [1, 2, 4]
    assert all(r["method"] == "ivf-fastscan" for r in rows)
    assert all(r["nlist"] == "55" for r in rows)
    for row in rows:
        assert 0.0 <= float(row["recall_at_1"]) <= 1.0
        assert float(row["ms_per_query"]) > 0


def test_dumped_ids_reproduce_reported_recall(workspace, capsys, tmp_path):
    data, _ = workspace
    dump = tmp_path / "ids.ivecs"
    rows = _search(workspace, capsys, "--nprobe", "1,4", "--dump-ids", str(dump))
    gt = GroundTruth.from_matrix(read_ivecs(data / "groundtruth.ivecs"))
    for i, row in enumerate(rows):
        ids = read_ivecs(tmp_path / f"ids.{i}.ivecs")
        assert ids.shape == (50, 10)
        assert f"{recall_at_1(ids, gt):.4f}" == row["recall_at_1"]


@pytest.mark.parametrize("method", ["pq-adc", "fastscan"])
def test_flat_methods(workspace, capsys, method):
    rows = _search(workspace, capsys, "--method", method)
    assert len(rows) == 1
    assert rows[0]["method"] == method
    assert rows[0]["nlist"] == "1"
    assert rows[0]["k"] == "16"


def test_all_backends_agree(workspace, capsys):
    recalls = {
        backend: _search(workspace, capsys, "--backend", backend, "--nprobe", "3")[0]["recall_at_1"]
        for backend in ("scalar", "simd128x2", "simd256")
    }
    assert len(set(recalls.values())) == 1
