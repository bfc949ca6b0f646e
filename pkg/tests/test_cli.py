import json
import subprocess
import sys

import numpy as np
import pytest

from vcgmm import io
from vcgmm.cli import main
from vcgmm.synthetic import gaussian_blobs


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data, _, _ = gaussian_blobs(2000, 3, 5, noise_fraction=0.02, seed=0)
    io.save_csv(data, root / "data.csv", header=["a", "b", "c"])
    io.save_binary(data, root / "data.bin")
    return root, data


def test_fit_prints_summary_and_writes_outputs(dataset, capsys):
    root, data = dataset
    out = root / "fit"
    code = main(["fit", "--data", str(root / "data.csv"), "--clusters", "8", "--g-size", "3",
                 "--coreset-size", "800", "--seed", "2", "--baseline", "--out", str(out)])
    assert code == 0
    text = capsys.readouterr().out
    for label in ("final objective", "quantization error", "eta vs k-means++",
                  "distance evaluations", "time"):
        assert label in text
    model = io.load_model(out / "model.json")
    assert model.means.shape == (8, 3) and model.variance > 0
    rec = json.loads((out / "results.jsonl").read_text().splitlines()[0])
    assert rec["algorithm"] == "vc-gmm" and rec["seed"] == 2 and rec["eta"] is not None
    assert rec["config_echo"]["spec"]["n_clusters"] == 8


def test_fit_single_cluster_converges(dataset, capsys):
    root, _ = dataset
    out = root / "one"
    assert main(["fit", "--data", str(root / "data.bin"), "--clusters", "1", "--g-size", "1",
                 "--algorithm", "var-gmm-s", "--out", str(out)]) == 0
    assert "(converged: True)" in capsys.readouterr().out
    rec = json.loads((out / "results.jsonl").read_text())
    assert rec["n_iterations"] <= 2 and rec["converged"]


@pytest.mark.parametrize("algo", ["kmeanspp", "lwcs-kmeans", "seed-only"])
def test_fit_other_algorithms(dataset, algo, capsys):
    root, _ = dataset
    assert main(["fit", "--data", str(root / "data.csv"), "--clusters", "5",
                 "--algorithm", algo, "--coreset-size", "500", "--g-size", "3"]) == 0
    assert f"algorithm            {algo}" in capsys.readouterr().out


def test_bench_writes_results(dataset, capsys):
    root, _ = dataset
    out = root / "bench"
    code = main(["bench", "--data", str(root / "data.csv"), "--clusters", "6",
                 "--algorithms", "vc-gmm", "var-gmm-s", "--g-size", "3+1", "5",
                 "--coreset-size", "300", "600", "--seeds", "0:2", "5", "--out", str(out)])
    assert code == 0
    lines = (out / "results.jsonl").read_text().splitlines()
    # per seed: baseline + 2 G settings x (2 coreset sizes + 1 coreset-free)
    assert len(lines) == 3 * (1 + 2 * 2 + 2)
    summary = json.loads((out / "summary.json").read_text())
    assert "kmeanspp" in summary["configurations"]
    assert "speedup(dist)=" in capsys.readouterr().out


def test_bench_identical_results_files(dataset, tmp_path):
    root, _ = dataset
    recs = []
    for name in ("a", "b"):
        main(["bench", "--data", str(root / "data.csv"), "--clusters", "5",
              "--algorithms", "vc-gmm", "--g-size", "3", "--coreset-size", "400",
              "--seeds", "0:2", "--out", str(tmp_path / name)])
        rows = [json.loads(line) for line in
                (tmp_path / name / "results.jsonl").read_text().splitlines()]
        for r in rows:
            r.pop("wall_times"), r.pop("algorithm_time")
        recs.append(rows)
    assert recs[0] == recs[1]


def test_coreset_seed_and_eval(dataset, tmp_path, capsys):
    root, data = dataset
    assert main(["coreset", "--data", str(root / "data.csv"), "--coreset-size", "100",
                 "--out", str(tmp_path / "c.csv")]) == 0
    cs = io.load_coreset(tmp_path / "c.csv")
    assert cs.n_core == 100
    assert "2000 distance evaluations" in capsys.readouterr().out
    for method in ("afkmc2", "d2", "uniform"):
        assert main(["seed", "--data", str(root / "data.csv"), "--clusters", "4",
                     "--method", method, "--out", str(tmp_path / f"{method}.json")]) == 0
    assert main(["eval", "--data", str(root / "data.csv"), "--model",
                 str(tmp_path / "afkmc2.json"), "--reference", str(tmp_path / "afkmc2.json"),
                 "--out", str(tmp_path / "e.json")]) == 0
    result = json.loads((tmp_path / "e.json").read_text())
    assert result["nmi"] == 1.0 and result["n_clusters"] == 4
    labels = np.zeros(len(data))
    io.save_csv(labels[:, None], tmp_path / "labels.csv")
    assert main(["eval", "--data", str(root / "data.csv"), "--model",
                 str(tmp_path / "d2.json"), "--labels", str(tmp_path / "labels.csv")]) == 0


def test_exit_codes(dataset, tmp_path, capsys):
    root, _ = dataset
    with pytest.raises(SystemExit) as exc:
        main(["fit", "--bogus"])
    assert exc.value.code == 1
    assert "usage:" in capsys.readouterr().err
    # configuration error: vc-gmm needs a coreset size
    assert main(["fit", "--data", str(root / "data.csv"), "--clusters", "3"]) == 1
    assert main(["fit", "--data", str(root / "data.csv"), "--clusters", "3", "--g-size", "4",
                 "--coreset-size", "100"]) == 1
    # data errors
    assert main(["fit", "--data", str(tmp_path / "missing.csv"), "--clusters", "3",
                 "--coreset-size", "10", "--g-size", "2"]) == 2
    (tmp_path / "bad.csv").write_text("1,2\n3\n")
    assert main(["seed", "--data", str(tmp_path / "bad.csv"), "--clusters", "2"]) == 2
    # numerical abort
    io.save_csv(np.array([[1e200], [-1e200], [3e200]]), tmp_path / "huge.csv")
    assert main(["fit", "--data", str(tmp_path / "huge.csv"), "--clusters", "2",
                 "--g-size", "1", "--algorithm", "var-gmm-s"]) == 3
    err = capsys.readouterr().err
    assert "configuration error" in err and "data error" in err and "numerical abort" in err


def test_console_entry_point(dataset):
    root, _ = dataset
    proc = subprocess.run([sys.executable, "-m", "vcgmm.cli", "seed", "--data",
                           str(root / "data.csv"), "--clusters", "3"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "afkmc2 seeding" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "vcgmm.cli", "nope"], capture_output=True,
                          text=True)
    assert proc.returncode == 1 and "usage:" in proc.stderr
