import math
import os
import subprocess

import numpy as np
import pytest

import trajgeom
from trajgeom.extract import VocabularyError, verify_vocabulary


def test_menger_and_angles():
    right = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
    assert trajgeom.local_menger_curvatures(right) == pytest.approx([math.sqrt(2)], abs=1e-12)
    assert trajgeom.sequence_curvature(right) == pytest.approx(math.pi / 2, abs=1e-12)
    back = np.array([[0.0], [1.0], [0.5]])
    assert trajgeom.menger_sequence_curvature(back) == pytest.approx(2.0, abs=1e-12)


def test_participation_ratio_and_invariance():
    cross = np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0], [0, -1.0, 0]])
    assert trajgeom.effective_dimensionality(cross) == 2.0
    assert trajgeom.elongation(cross) == pytest.approx(0.0, abs=1e-12)

    rng = np.random.default_rng(0)
    x = rng.standard_normal((9, 32))
    q, _ = np.linalg.qr(rng.standard_normal((32, 32)))
    y = 3.0 * x @ q + 5.0
    for f in (trajgeom.sequence_curvature, trajgeom.menger_sequence_curvature,
              trajgeom.effective_dimensionality, trajgeom.elongation):
        assert f(y) == pytest.approx(f(x), abs=1e-9)
    spec = trajgeom.covariance_spectrum(x, route="covariance")
    ref = np.sort(np.linalg.eigvalsh(np.cov(x, rowvar=False)))[::-1]
    assert spec == pytest.approx(ref[: len(spec)], abs=1e-10)


def test_bad_input_raises():
    with pytest.raises(trajgeom.DomainError):
        trajgeom.effective_dimensionality(np.zeros((4, 3)))
    with pytest.raises(ValueError):
        trajgeom.covariance_spectrum(np.eye(3), route="svd")


def test_stats():
    r = trajgeom.ttest_ind([2.1, 3.4, 1.9, 5.6, 4.2], [6.3, 7.1, 5.8, 8.4, 6.9, 7.7])
    assert r["statistic"] == pytest.approx(-4.5744541909264121648, abs=1e-10)
    assert r["p_value"] == pytest.approx(0.0032424740247611264858, abs=1e-10)
    same = trajgeom.ttest_ind([1, 2, 3], [1, 2, 3])
    assert same["statistic"] == 0.0 and same["p_value"] == 1.0


def _planted_bundle(path):
    """Short windows zigzag at every layer; long ones straighten with depth."""
    layers, tokens, dim = 30, 7, 4
    seqs, acts = [], []
    for i in range(12):
        cond = "short" if i < 6 else "long"
        a = np.zeros((layers, tokens, dim), dtype=np.float32)
        for layer in range(layers):
            bend = 1.0 if cond == "short" else max(0.0, 1.0 - layer / 20.0)
            for t in range(tokens):
                a[layer, t, 0] = t
                a[layer, t, 1] = bend * (t % 2) + 0.01 * i
        acts.append(a)
        seqs.append({"id": f"s{i:02d}", "condition": cond, "token_ids": list(range(tokens)),
                     "spans": [{"start": 0, "end": tokens, "label": "test-window"}],
                     "payload": {}})
    manifest = {"format_version": 1, "model_id": "toy", "tokenizer_id": "toy",
                "layer_semantics": "block_output", "n_layers_stored": layers,
                "hidden_dim": dim, "has_embedding_layer": False, "precision": "bfloat16",
                "creation_seed": 0,
                "tracked_token_ids": [], "tracked_token_labels": [], "suite": None,
                "sequences": seqs}
    trajgeom.write_bundle(path, manifest, acts)
    return manifest, acts


def test_bundle_round_trip_and_analysis(tmp_path):
    manifest, acts = _planted_bundle(tmp_path / "bundle")
    assert trajgeom.validate(tmp_path / "bundle") == ("bundle", 12)
    back, back_acts, logits = trajgeom.read_bundle(tmp_path / "bundle")
    assert back["precision"] == "bfloat16"
    assert [s["id"] for s in back["sequences"]] == [s["id"] for s in manifest["sequences"]]
    assert all(np.array_equal(a, b) for a, b in zip(acts, back_acts))
    assert logits == [None] * 12

    geo, beh, st = trajgeom.analyze(tmp_path / "bundle", tmp_path / "out", seed=1)
    assert len(geo["sequences"]) == 12
    assert beh["status"] == "skipped"
    (contrast,) = [t for t in st["tests"] if t["name"] == "contrast:short-vs-long"
                   and t["column"] == "band.straightening"]
    assert contrast["p_value"] < 1e-6
    files = trajgeom.report(tmp_path / "out", tmp_path / "report")
    assert any(p.name.endswith(".csv") for p in files)


def test_generate_and_errors(tmp_path):
    n = trajgeom.generate("grid", tmp_path / "suite", seed=3, condition="short", n=4)
    assert n == 4
    assert trajgeom.validate(tmp_path / "suite") == ("suite", 4)
    with pytest.raises(trajgeom.InfeasibleError):
        trajgeom.generate("grid", tmp_path / "x", condition="short", length=9, n=1)
    with pytest.raises(trajgeom.UsageError):
        trajgeom.generate("maze", tmp_path / "x")
    with pytest.raises(trajgeom.UsageError):
        trajgeom.generate("grid", tmp_path / "x", config={"config_version": 1, "bogus": 1})


class _Tok:
    def encode(self, text, add_special_tokens=False):
        return [len(text)] if len(text) < 7 else [1, 2]


def test_verify_vocabulary():
    assert verify_vocabulary(["apple", "cat"], _Tok()) == {"apple": 6, "cat": 4}
    assert verify_vocabulary([], _Tok()) == {}
    with pytest.raises(VocabularyError) as e:
        verify_vocabulary(["apple", "pineapple"], _Tok())
    assert e.value.violators == ["pineapple"]


@pytest.mark.skipif("TRAJGEOM_CLI" not in os.environ, reason="CLI path not given")
def test_cli_exit_codes(tmp_path):
    cli = os.environ["TRAJGEOM_CLI"]
    run = lambda *a: subprocess.run([cli, *map(str, a)], capture_output=True).returncode
    assert run("--out", tmp_path / "s", "--seed", 2, "generate", "grid", "--n", 2) == 0
    assert run("validate", tmp_path / "s") == 0
    assert run("frobnicate") == 1
    assert run("validate", tmp_path) == 2
    assert run("--out", tmp_path / "x", "generate", "grid", "--condition", "short",
               "--length", 9, "--n", 1) == 3
