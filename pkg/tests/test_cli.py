import json

import numpy as np
import pandas as pd
import pytest

from chaosaudio.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, main


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    cfg = out / "cfg.json"
    cfg.write_text(json.dumps({
        "synth": {"seconds_per_class": {
            "silence": 30, "soft_tone": 30, "loud_noise": 30, "crying": 30
        }}
    }))
    assert main(["--config", str(cfg), "--seed", "5", "--out", str(out), "synth"]) == EXIT_OK
    return out


def test_synth_outputs(corpus_dir):
    assert (corpus_dir / "labels.csv").exists()
    assert (corpus_dir / "silence.wav").exists()
    manifest = json.loads((corpus_dir / "run_manifest.json").read_text())
    assert manifest["command"] == "synth"
    assert manifest["seed"] == 5
    assert "labels.csv" in manifest["artifacts"]


def test_extract_then_tree(corpus_dir, tmp_path):
    out = tmp_path / "run"
    wavs = sorted(str(p) for p in corpus_dir.glob("*.wav"))
    assert main(["--seed", "5", "--out", str(out), "extract", *wavs]) == EXIT_OK
    features = out / "features.csv"
    table = pd.read_csv(features)
    assert len(table) == 8  # 30 s/class -> 2 windows each
    assert main(["--seed", "5", "--out", str(out), "tree",
                 "--features", str(features)]) == EXIT_OK
    assert (out / "tree_model.json").exists()
    pred = pd.read_csv(out / "tree_predictions.csv")
    assert {"leaf_label", "chaos_level"} <= set(pred.columns)


def test_extract_reuses_cache(corpus_dir, tmp_path):
    out = tmp_path / "run"
    wavs = sorted(str(p) for p in corpus_dir.glob("*.wav"))
    assert main(["--seed", "5", "--out", str(out), "extract", *wavs]) == EXIT_OK
    cache_files = sorted(out.glob("cache/*.csv"))
    assert len(cache_files) == 4
    stamps = {p.name: p.stat().st_mtime_ns for p in cache_files}
    assert main(["--seed", "5", "--out", str(out), "extract", *wavs]) == EXIT_OK
    # second run reads the per-source caches instead of recomputing
    assert {p.name: p.stat().st_mtime_ns for p in sorted(out.glob("cache/*.csv"))} == stamps


def test_extract_removes_partial_output_on_failure(corpus_dir, tmp_path):
    out = tmp_path / "run"
    good = sorted(str(p) for p in corpus_dir.glob("*.wav"))
    bad = tmp_path / "broken.wav"
    bad.write_bytes(b"RIFFxxxxWAVEjunk")
    code = main(["--seed", "5", "--out", str(out), "extract", *good, str(bad)])
    assert code == EXIT_IO
    assert not (out / "features.csv").exists()


def test_byte_identical_rerun(corpus_dir, tmp_path):
    out = tmp_path / "run"
    wavs = sorted(str(p) for p in corpus_dir.glob("*.wav"))
    snapshots = []
    for _ in range(2):
        assert main(["--seed", "5", "--out", str(out), "extract", *wavs]) == EXIT_OK
        assert main(["--seed", "5", "--out", str(out), "tree",
                     "--features", str(out / "features.csv")]) == EXIT_OK
        snapshots.append({
            p.relative_to(out).as_posix(): p.read_bytes()
            for p in out.rglob("*") if p.is_file()
        })
    assert snapshots[0] == snapshots[1]


def test_missing_config_file_is_config_error(tmp_path):
    code = main(["--config", str(tmp_path / "nope.json"), "--out", str(tmp_path), "synth"])
    assert code == EXIT_CONFIG


def test_invalid_json_config(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text("{not json")
    assert main(["--config", str(cfg), "--out", str(tmp_path), "synth"]) == EXIT_CONFIG


def test_extract_without_inputs_is_config_error(tmp_path):
    assert main(["--out", str(tmp_path), "extract"]) == EXIT_CONFIG


def test_tree_without_features_is_io_error(tmp_path):
    assert main(["--out", str(tmp_path), "tree"]) == EXIT_IO


def test_audit_score_mode(tmp_path):
    manifest = tmp_path / "manifest.csv"
    pd.DataFrame(
        [{"leaf_label": "a", "verdict": "correct"},
         {"leaf_label": "a", "verdict": "incorrect"}]
    ).to_csv(manifest, index=False)
    out = tmp_path / "out"
    assert main(["--out", str(out), "audit", "--manifest", str(manifest)]) == EXIT_OK
    scores = pd.read_csv(out / "audit_scores.csv")
    assert scores.loc[scores["leaf_label"] == "a", "accuracy"].iloc[0] == 0.5


def test_som_command(corpus_dir, tmp_path):
    out = tmp_path / "run"
    wavs = sorted(str(p) for p in corpus_dir.glob("*.wav"))
    assert main(["--seed", "5", "--out", str(out), "extract", *wavs]) == EXIT_OK
    cfg = tmp_path / "som.json"
    cfg.write_text(json.dumps({"som": {"rows": 4, "cols": 4, "epochs": 5}}))
    assert main(["--config", str(cfg), "--seed", "5", "--out", str(out), "som",
                 "--features", str(out / "features.csv")]) == EXIT_OK
    assert (out / "som_model.json").exists()
    um = np.loadtxt(out / "som_u_matrix.csv", delimiter=",")
    assert um.shape == (4, 4)
    planes = list((out / "som_planes").glob("*.csv"))
    assert len(planes) == 16
