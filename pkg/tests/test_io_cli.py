import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from glsae.cli import main
from glsae.io import PanelFormatError, load_panel, save_panel, read_table


def _write_panel(path, rows, header="area,source,estimate,se"):
    path.write_text(header + "\n" + "\n".join(rows) + "\n", encoding="utf-8")


@pytest.fixture
def panel_file(tmp_path):
    path = tmp_path / "panel.csv"
    rows = []
    gen = np.random.default_rng(1)
    for i in range(8):
        for src in ("brfss", "sahie"):
            est = 0.25 + 0.03 * gen.standard_normal()
            se = 0.02 if src == "brfss" else 0.008
            rows.append(f"c{i:02d},{src},{est!r},{se}")
    _write_panel(path, rows)
    return path


def test_load_panel_shapes_and_values(panel_file):
    panel = load_panel(panel_file)
    assert panel.n_areas == 8 and panel.n_sources == 2
    assert panel.sources == ("brfss", "sahie")
    assert np.allclose(panel.v[:, 0], 0.02**2)  # se squared on ingestion


def test_load_panel_rejects_zero_se(tmp_path):
    path = tmp_path / "bad.csv"
    _write_panel(path, ["a,s1,0.2,0.01", "a,s2,0.2,0.0", "b,s1,0.2,0.01", "b,s2,0.2,0.01"])
    with pytest.raises(PanelFormatError, match="bad.csv:3"):
        load_panel(path)


def test_load_panel_rejects_duplicates(tmp_path):
    path = tmp_path / "dup.csv"
    _write_panel(path, ["a,s1,0.2,0.01", "a,s1,0.21,0.01", "b,s1,0.2,0.01"])
    with pytest.raises(PanelFormatError, match="duplicate"):
        load_panel(path)


def test_load_panel_rejects_ragged(tmp_path):
    path = tmp_path / "ragged.csv"
    _write_panel(path, ["a,s1,0.2,0.01", "a,s2,0.2,0.01", "b,s1,0.2,0.01"])
    with pytest.raises(PanelFormatError, match="non-rectangular"):
        load_panel(path)


def test_load_panel_rejects_bad_header(tmp_path):
    path = tmp_path / "hdr.csv"
    _write_panel(path, ["a,s1,0.2,0.01"], header="id,source,estimate,se")
    with pytest.raises(PanelFormatError, match="header"):
        load_panel(path)


def test_load_panel_reports_malformed_line(tmp_path):
    path = tmp_path / "mal.csv"
    _write_panel(path, ["a,s1,0.2,0.01", "b,s1,zzz,0.01"])
    with pytest.raises(PanelFormatError, match="mal.csv:3"):
        load_panel(path)


def test_save_load_roundtrip(tmp_path, panel_file):
    panel = load_panel(panel_file)
    out = tmp_path / "resaved.csv"
    save_panel(panel, out)
    back = load_panel(out)
    assert back.areas == panel.areas and back.sources == panel.sources
    assert np.array_equal(back.y, panel.y)
    assert np.allclose(back.v, panel.v, rtol=1e-15)


def _tree_digest(root: Path) -> dict[str, str]:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            out[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


def test_fit_command_outputs_and_determinism(tmp_path, panel_file):
    out1, out2 = tmp_path / "fit1", tmp_path / "fit2"
    args = [
        "fit", "--panel", str(panel_file), "--model", "m1a,m1b",
        "--chains", "2", "--iters", "300", "--burnin", "100",
        "--seed", "42", "--out",
    ]
    assert main(args + [str(out1)]) == 0
    assert main(args + [str(out2)]) == 0
    d1, d2 = _tree_digest(out1), _tree_digest(out2)
    assert d1 == d2  # byte-identical rerun

    names = set(d1)
    for tag in ("m1a", "m1b"):
        assert f"summary_{tag}.csv" in names
        assert f"phi_{tag}.csv" in names
        assert f"kappa_{tag}.csv" in names
        assert f"rhat_{tag}.csv" in names
        assert f"draws/{tag}/mu.npy" in names
    assert "manifest.json" in names and "plot_long.csv" in names

    header, rows = read_table(out1 / "summary_m1a.csv")
    assert header == ["area", "post_mean", "post_sd", "lower", "upper"]
    assert len(rows) == 8
    h2, rows2 = read_table(out1 / "summary_m1b.csv")
    assert [r[0] for r in rows] == [r[0] for r in rows2]  # identical area ordering

    manifest = json.loads((out1 / "manifest.json").read_text())
    stamp = manifest["manifest_hash"]
    first = (out1 / "summary_m1a.csv").read_text().splitlines()[0]
    assert first == f"# manifest: {stamp}"
    for rel, digest in manifest["outputs"].items():
        assert hashlib.sha256((out1 / rel).read_bytes()).hexdigest() == digest


def test_fit_one_source_needs_source_flag(tmp_path, panel_file):
    with pytest.raises(ValueError, match="--source"):
        main([
            "fit", "--panel", str(panel_file), "--model", "one-source",
            "--iters", "50", "--burnin", "10", "--seed", "1", "--out", str(tmp_path / "x"),
        ])
    out = tmp_path / "mbr"
    code = main([
        "fit", "--panel", str(panel_file), "--model", "one-source", "--source", "brfss",
        "--iters", "200", "--burnin", "50", "--seed", "1", "--out", str(out), "--no-draws",
    ])
    assert code == 0
    header, rows = read_table(out / "summary_one_source.csv")
    assert len(rows) == 8


def test_diagnose_command(tmp_path, panel_file, capsys):
    out = tmp_path / "fit"
    main([
        "fit", "--panel", str(panel_file), "--model", "m12",
        "--chains", "3", "--iters", "2500", "--burnin", "500",
        "--seed", "7", "--out", str(out),
    ])
    code = main(["diagnose", "--draws", str(out / "draws" / "m12"), "--quantity", "mu"])
    captured = capsys.readouterr().out
    assert "parameter,split_rhat,status" in captured
    assert code == 0


def test_evaluate_command(tmp_path, capsys):
    est = tmp_path / "est.csv"
    tru = tmp_path / "tru.csv"
    est.write_text("area,value\nc1,0.30\n", encoding="utf-8")
    tru.write_text("area,value\nc1,0.25\n", encoding="utf-8")
    assert main(["evaluate", "--estimates", str(est), "--truths", str(tru)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "arb,asrb,aad,asd,n_nonpositive_truth"
    vals = [float(x) for x in lines[1].split(",")]
    assert vals == pytest.approx([0.2, 0.04, 0.05, 0.0025, 0.0])


def test_simulate_command_deterministic_across_workers(tmp_path, monkeypatch):
    args = [
        "simulate", "--case", "1", "--rows", "1", "--replicates", "2",
        "--models", "m1a,m12", "--iters", "200", "--burnin", "50",
        "--seed", "9", "--out",
    ]
    out1, out2, out3 = tmp_path / "s1", tmp_path / "s2", tmp_path / "s3"
    monkeypatch.setenv("GLSAE_WORKERS", "1")
    assert main(args + [str(out1)]) == 0
    assert main(args + [str(out2)]) == 0
    monkeypatch.setenv("GLSAE_WORKERS", "2")
    assert main(args + [str(out3)]) == 0

    for name in ("case1_medians.csv", "case1_ratio_by_spec.csv", "case1_ratio_summary.csv", "manifest.json"):
        b1 = (out1 / name).read_bytes()
        assert b1 == (out2 / name).read_bytes(), name
        assert b1 == (out3 / name).read_bytes(), name


def test_simulate_resume_from_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("GLSAE_WORKERS", "1")
    args = [
        "simulate", "--case", "6", "--rows", "1,2", "--replicates", "2",
        "--models", "m1a,mbr", "--baseline", "m1a",
        "--iters", "150", "--burnin", "50", "--seed", "4", "--out",
    ]
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(args + [str(out1)]) == 0
    # partially seed the second run's cache from the first, then resume
    (out2 / "cache").mkdir(parents=True)
    cache_files = sorted((out1 / "cache").glob("*.json"))
    for f in cache_files[: len(cache_files) // 2]:
        (out2 / "cache" / f.name).write_bytes(f.read_bytes())
    assert main(args + [str(out2)]) == 0
    assert (out1 / "case6_ratio_by_spec.csv").read_bytes() == (out2 / "case6_ratio_by_spec.csv").read_bytes()


def test_simulate_wider_j_bootstrap_mode(tmp_path, monkeypatch):
    monkeypatch.setenv("GLSAE_WORKERS", "1")
    out = tmp_path / "j4"
    code = main([
        "simulate", "--case", "1", "--rows", "1", "--replicates", "2",
        "--models", "m1a,m12", "--sources", "4", "--bootstrap-v",
        "--iters", "150", "--burnin", "50", "--seed", "12", "--out", str(out),
    ])
    assert code == 0
    header, rows = read_table(out / "case1_ratio_by_spec.csv")
    assert len(rows) == 1
    # fixed-variance mode cannot serve J=4 panels
    with pytest.raises(ValueError, match="bootstrap"):
        main([
            "simulate", "--case", "1", "--rows", "1", "--replicates", "1",
            "--models", "m1a,m12", "--sources", "4",
            "--iters", "100", "--burnin", "20", "--seed", "12",
            "--out", str(tmp_path / "j4bad"),
        ])


def test_simulate_rejects_unknown_baseline(tmp_path):
    with pytest.raises(ValueError, match="baseline"):
        main([
            "simulate", "--case", "1", "--rows", "1", "--replicates", "1",
            "--models", "m1a,m12", "--baseline", "m11a",
            "--iters", "100", "--burnin", "20", "--seed", "3",
            "--out", str(tmp_path / "x"),
        ])
