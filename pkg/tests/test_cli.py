import hashlib
import json

import numpy as np

from morphkit import (
    EmbeddingSet,
    SimConfig,
    normalize,
    read_embeddings,
    write_embeddings,
)
from morphkit.cli import main


def write_tiny_inputs(tmp_path, dim=8, twin=False):
    rng = np.random.default_rng(7)
    e_a = normalize(rng.standard_normal(dim))
    e_b = e_a if twin else normalize(rng.standard_normal(dim))
    e_c = normalize(rng.standard_normal(dim))
    e_d = normalize(rng.standard_normal(dim))
    embeddings = EmbeddingSet.from_embeddings(
        [
            ("A", "r0", e_a, 1.0),
            ("B", "r0", e_b, 1.0),
            ("C", "r0", e_c, 1.0),
            ("D", "r0", e_d, 1.0),
        ],
        dim=dim,
    )
    emb_path = tmp_path / "refs.femb"
    write_embeddings(embeddings, emb_path)
    protocol_path = tmp_path / "protocol.txt"
    protocol_path.write_text(
        "pair A B r0 r0\npair C D r0 r0\n"
        "probe A r0\nprobe B r0\nprobe C r0\nprobe D r0\n"
    )
    return emb_path, protocol_path, embeddings


def test_morph_writes_one_record_per_pair(tmp_path):
    emb_path, protocol_path, _ = write_tiny_inputs(tmp_path)
    out = tmp_path / "morphs.femb"
    code = main(
        ["morph", "--in", str(emb_path), "--protocol", str(protocol_path), "--out", str(out)]
    )
    assert code == 0
    morphs = read_embeddings(out)
    assert len(morphs) == 2
    assert [r.key for r in morphs.records] == [("morph", "A+B"), ("morph", "C+D")]


def test_morph_of_identical_twins_is_the_shared_embedding(tmp_path):
    emb_path, protocol_path, embeddings = write_tiny_inputs(tmp_path, twin=True)
    out = tmp_path / "morphs.femb"
    assert main(
        ["morph", "--in", str(emb_path), "--protocol", str(protocol_path), "--out", str(out)]
    ) == 0
    morphs = read_embeddings(out)
    twin = embeddings.get("A", "r0").embedding
    got = morphs.get("morph", "A+B").embedding
    assert np.max(np.abs(got.values - twin.values)) < 1e-6


def test_morph_missing_reference_fails_nonzero(tmp_path, capsys):
    emb_path, protocol_path, _ = write_tiny_inputs(tmp_path)
    protocol_path.write_text(
        "pair A Z r0 r0\nprobe A r0\nprobe Z p0\n"
    )
    code = main(
        [
            "morph",
            "--in",
            str(emb_path),
            "--protocol",
            str(protocol_path),
            "--out",
            str(tmp_path / "m.femb"),
        ]
    )
    assert code == 1
    assert "MissingEmbedding" in capsys.readouterr().err


def test_morph_alpha_uses_weighted_blend(tmp_path):
    emb_path, protocol_path, embeddings = write_tiny_inputs(tmp_path)
    out = tmp_path / "weighted.femb"
    assert main(
        [
            "morph",
            "--in", str(emb_path),
            "--protocol", str(protocol_path),
            "--out", str(out),
            "--alpha", "0.25",
        ]
    ) == 0
    a = embeddings.get("A", "r0").embedding.values
    b = embeddings.get("B", "r0").embedding.values
    expected = 0.25 * a + 0.75 * b
    expected /= np.linalg.norm(expected)
    got = read_embeddings(out).get("morph", "A+B").embedding.values
    assert np.max(np.abs(got - expected)) < 1e-6


SIM_FILES = [
    "refs_frs-a.femb",
    "probes_frs-a.femb",
    "refs_frs-b.femb",
    "probes_frs-b.femb",
    "attack_white-box.femb",
    "attack_black-box.femb",
]


def write_config(tmp_path, **overrides):
    config = SimConfig(
        n_subjects=8, probes_per_subject=2, n_nonmated_pairs=200, seed=5, **overrides
    )
    path = tmp_path / "sim.cfg"
    config.to_file(path)
    return path


def test_simulate_file_inventory(tmp_path):
    config_path = write_config(tmp_path)
    out_dir = tmp_path / "run"
    assert main(["simulate", "--config", str(config_path), "--out", str(out_dir)]) == 0
    names = sorted(p.name for p in out_dir.iterdir())
    assert sorted(SIM_FILES + ["protocol.txt", "manifest.json"]) == names
    assert len([n for n in names if n.endswith(".femb")]) == 6


def test_simulate_same_seed_byte_identical_outputs(tmp_path):
    config_path = write_config(tmp_path)
    out_1, out_2 = tmp_path / "run1", tmp_path / "run2"
    assert main(["simulate", "--config", str(config_path), "--out", str(out_1)]) == 0
    assert main(["simulate", "--config", str(config_path), "--out", str(out_2)]) == 0
    for name in SIM_FILES + ["protocol.txt"]:
        assert (out_1 / name).read_bytes() == (out_2 / name).read_bytes()


def test_simulate_seed_flag_changes_outputs(tmp_path):
    config_path = write_config(tmp_path)
    out_1, out_2 = tmp_path / "run1", tmp_path / "run2"
    assert main(["simulate", "--config", str(config_path), "--out", str(out_1)]) == 0
    assert main(
        ["simulate", "--config", str(config_path), "--out", str(out_2), "--seed", "6"]
    ) == 0
    assert (out_1 / SIM_FILES[0]).read_bytes() != (out_2 / SIM_FILES[0]).read_bytes()
    manifest = json.loads((out_2 / "manifest.json").read_text())
    assert manifest["seed"] == 6


def test_simulate_rho_one_zero_noise_attack_files_identical(tmp_path):
    config_path = write_config(
        tmp_path,
        cross_frs_correlation=1.0,
        sample_noise_sigma=0.0,
        inversion_noise_sigma=0.0,
    )
    out_dir = tmp_path / "run"
    assert main(["simulate", "--config", str(config_path), "--out", str(out_dir)]) == 0
    white = (out_dir / "attack_white-box.femb").read_bytes()
    black = (out_dir / "attack_black-box.femb").read_bytes()
    assert white == black


def test_manifest_digests_match_inputs(tmp_path):
    config_path = write_config(tmp_path)
    out_dir = tmp_path / "run"
    assert main(["simulate", "--config", str(config_path), "--out", str(out_dir)]) == 0
    manifest = json.loads((out_dir / "manifest.json").read_text())
    digest = hashlib.sha256(config_path.read_bytes()).hexdigest()
    assert manifest["inputs"][str(config_path)] == f"sha256:{digest}"
    assert manifest["command"] == "simulate"
    assert manifest["tool_version"]
    assert "simulate" in manifest["timings_s"]


def test_calibrate_prints_operating_point(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("MORPHKIT_OUT", str(tmp_path))
    scores_path = tmp_path / "scores.csv"
    rows = "\n".join(f"nonmated,{v}" for v in np.linspace(-0.9, 0.4, 1000))
    scores_path.write_text("label,score\n" + rows + "\n")
    assert main(["calibrate", "--nonmated", str(scores_path), "--target-fmr", "1e-3"]) == 0
    out = capsys.readouterr().out
    assert "threshold=0.4" in out
    assert "fmr=0.001000" in out
    assert (tmp_path / "calibrate.manifest.json").exists()


def test_calibrate_rejects_target_one(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("MORPHKIT_OUT", str(tmp_path))
    scores_path = tmp_path / "scores.csv"
    scores_path.write_text("label,score\nnonmated,0.5\n")
    code = main(["calibrate", "--nonmated", str(scores_path), "--target-fmr", "1.0"])
    assert code == 1
    assert "InvalidTargetFmr" in capsys.readouterr().err


def test_calibrate_from_embeddings_with_fnmr(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("MORPHKIT_OUT", str(tmp_path))
    rng = np.random.default_rng(11)
    entries = []
    for s in range(6):
        base = rng.standard_normal(16)
        for j in range(3):
            entries.append(
                (f"s{s}", f"p{j}", normalize(base + 0.05 * rng.standard_normal(16)), 1.0)
            )
    emb_path = tmp_path / "set.femb"
    write_embeddings(EmbeddingSet.from_embeddings(entries, dim=16), emb_path)
    out_json = tmp_path / "point.json"
    assert main(
        [
            "calibrate",
            "--nonmated", str(emb_path),
            "--mated", str(emb_path),
            "--target-fmr", "0.05",
            "--out", str(out_json),
        ]
    ) == 0
    point = json.loads(out_json.read_text())
    assert point["fmr"] <= 0.05
    assert point["n_mated"] == 18  # 6 subjects x C(3,2)
    assert point["n_nonmated"] == 135  # C(18,2) - 18
    assert "fnmr=" in capsys.readouterr().out


def run_simulation_dir(tmp_path):
    config_path = write_config(tmp_path)
    out_dir = tmp_path / "run"
    assert main(["simulate", "--config", str(config_path), "--out", str(out_dir)]) == 0
    return out_dir


def test_eval_vuln_report_format(tmp_path):
    out_dir = run_simulation_dir(tmp_path)
    report = tmp_path / "vuln.csv"
    code = main(
        [
            "eval-vuln",
            "--morphs", str(out_dir / "attack_white-box.femb"),
            "--probes", str(out_dir / "probes_frs-a.femb"),
            "--protocol", str(out_dir / "protocol.txt"),
            "--threshold", "-1.0",
            "--frs-label", "AF",
            "--attack-label", "Inv-AF",
            "--attack-mode", "white-box",
            "--out", str(report),
        ]
    )
    assert code == 0
    text = report.read_text()
    assert text.splitlines()[0] == "frs,attack,mode,minmax_mmpmr_pct,prodavg_mmpmr_pct"
    assert text.splitlines()[1] == "AF,Inv-AF,white-box,100.00,100.00"
    manifest = json.loads((tmp_path / "vuln.csv.manifest.json").read_text())
    assert manifest["config"]["threshold"] == -1.0


def test_eval_vuln_with_calibration(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("MORPHKIT_OUT", str(tmp_path))
    out_dir = run_simulation_dir(tmp_path)
    capsys.readouterr()  # drop the simulate file listing
    code = main(
        [
            "eval-vuln",
            "--morphs", str(out_dir / "attack_white-box.femb"),
            "--probes", str(out_dir / "probes_frs-a.femb"),
            "--protocol", str(out_dir / "protocol.txt"),
            "--nonmated", str(out_dir / "probes_frs-a.femb"),
            "--target-fmr", "0.01",
            "--format", "markdown",
        ]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert out.startswith("| frs | attack | mode |")
    manifest = json.loads((tmp_path / "eval-vuln.manifest.json").read_text())
    assert "calibrated_fmr" in manifest["config"]


def test_eval_detect_report(tmp_path):
    attack_csv = tmp_path / "attack.csv"
    bonafide_csv = tmp_path / "bonafide.csv"
    attack_csv.write_text(
        "label,score\n" + "\n".join(f"attack,{0.6 + 0.01 * i}" for i in range(20)) + "\n"
    )
    bonafide_csv.write_text(
        "label,score\n" + "\n".join(f"bonafide,{-0.2 + 0.01 * i}" for i in range(20)) + "\n"
    )
    report = tmp_path / "det.csv"
    code = main(
        [
            "eval-detect",
            "--attack", str(attack_csv),
            "--bonafide", str(bonafide_csv),
            "--label", "Inv-AF",
            "--out", str(report),
        ]
    )
    assert code == 0
    assert report.read_text() == "attack,auc,eer_pct\nInv-AF,1.000,0.00\n"


def test_bench_reports_mean_plus_minus_std(tmp_path, capsys):
    emb_path, protocol_path, _ = write_tiny_inputs(tmp_path)
    report = tmp_path / "bench.csv"
    code = main(
        [
            "bench",
            "--in", str(emb_path),
            "--protocol", str(protocol_path),
            "--reps", "4",
            "--label", "Inv-AF",
            "--out", str(report),
        ]
    )
    assert code == 0
    lines = report.read_text().splitlines()
    assert lines[0] == "attack,runtime_s,reps"
    assert lines[1].startswith("Inv-AF,") and "±" in lines[1] and lines[1].endswith(",4")
    manifest = json.loads((tmp_path / "bench.csv.manifest.json").read_text())
    assert len(manifest["timings_s"]["per_rep"]) == 4
    assert "Inv-AF:" in capsys.readouterr().out


def test_bench_rejects_single_rep(tmp_path, capsys):
    emb_path, protocol_path, _ = write_tiny_inputs(tmp_path)
    code = main(
        ["bench", "--in", str(emb_path), "--protocol", str(protocol_path), "--reps", "1"]
    )
    assert code == 1


def test_unreadable_input_fails_typed(tmp_path, capsys):
    code = main(
        [
            "morph",
            "--in", str(tmp_path / "absent.femb"),
            "--protocol", str(tmp_path / "absent.txt"),
            "--out", str(tmp_path / "m.femb"),
        ]
    )
    assert code == 1
    assert "IoError" in capsys.readouterr().err


def test_env_var_sets_default_out_dir(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("MORPHKIT_OUT", str(tmp_path / "outputs"))
    config_path = write_config(tmp_path)
    assert main(["simulate", "--config", str(config_path)]) == 0
    assert (tmp_path / "outputs" / "manifest.json").exists()
