import subprocess
import sys

import numpy as np
import pytest

from sarsoil import dubois
from sarsoil.calibration import read_height_lm
from sarsoil.cli import main
from sarsoil.pipeline import save_bundle
from sarsoil.raster import Raster, SamplePoint, read_asc, write_asc, write_samples
from sarsoil.soil import dielectric_from_moisture
from sarsoil.synth import read_sampleset


def test_help_and_usage_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    for argv in (["synth", "--scenario", "bare"],
                 ["synth", "--scenario", "wet", "--out", "x"],
                 ["train", "--scenario", "bare", "--data", "d", "--out", "o", "--max-iter", "0"],
                 ["synth", "--scenario", "bare", "--out", "x", "--noise-db", "-1"],
                 ["frobnicate"]):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 2, argv


def test_synth_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert main(["synth", "--scenario", "veg", "--n", "20", "--seed", "4", "--out", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()
    s = read_sampleset(a)
    assert len(s) == 20 and s.height.min() >= 0.5


def test_synth_ranges_and_config(tmp_path):
    cfg = tmp_path / "synth.cfg"
    cfg.write_text("# overrides\nscenario = bare\nn = 15\nnoise-db = 0\nmv-range = 0.2,0.3\n")
    out = tmp_path / "s.csv"
    assert main(["synth", "--config", str(cfg), "--out", str(out), "--seed", "1"]) == 0
    s = read_sampleset(out)
    assert len(s) == 15 and s.mv.min() >= 0.2 and s.mv.max() <= 0.3
    # command line wins over the config file
    assert main(["synth", "--config", str(cfg), "--n", "3", "--out", str(out)]) == 0
    assert len(read_sampleset(out)) == 3
    cfg.write_text("bogus = 1\n")
    with pytest.raises(SystemExit) as exc:
        main(["synth", "--config", str(cfg), "--out", str(out)])
    assert exc.value.code == 2


def test_train_and_report(tmp_path, capsys):
    data = tmp_path / "bare.csv"
    main(["synth", "--scenario", "bare", "--n", "300", "--seed", "2", "--noise-db", "0",
          "--out", str(data)])
    net = tmp_path / "m" / "bnn.mlpw"
    net.parent.mkdir()
    code = main(["train", "--scenario", "bare", "--data", str(data), "--out", str(net),
                 "--max-iter", "3", "--hidden", "4,4", "--seed", "0"])
    assert code == 0
    assert net.read_text().startswith("MLPW1")
    assert "iterations=" in (tmp_path / "m" / "bnn.mlpw.report.txt").read_text()
    assert "bare: 3 iterations" in capsys.readouterr().out
    # vegetated data handed to the bare trainer is refused
    veg = tmp_path / "veg.csv"
    main(["synth", "--scenario", "veg", "--n", "10", "--out", str(veg)])
    assert main(["train", "--scenario", "bare", "--data", str(veg), "--out", str(net)]) == 1


def test_missing_input_is_runtime_error(tmp_path, capsys):
    code = main(["train", "--scenario", "bare", "--data", str(tmp_path / "none.csv"),
                 "--out", str(tmp_path / "x")])
    assert code == 1
    assert "sarsoil: error" in capsys.readouterr().err


def _scene(tmp_path):
    n = 8
    yy, xx = np.mgrid[0:n, 0:n] / (n - 1)
    mv = 0.2 + 0.1 * xx
    h = np.where(xx < 0.5, 0.1, 1.5)
    eps = dielectric_from_moisture(mv)
    paths = {}
    for band, lam in dubois.BANDS_CM.items():
        r = Raster(dubois.forward_db(62.0, 2.21, eps, lam, h), 1000.0, 2000.0, 1.0)
        paths[band] = tmp_path / f"sigma_{band}.asc"
        write_asc(r, paths[band])
    return paths, mv


def test_estimate_and_evaluate(tmp_path, random_model, capsys):
    save_bundle(random_model, tmp_path / "model")
    paths, mv = _scene(tmp_path)
    prefix = tmp_path / "out"
    argv = ["estimate", "--model", str(tmp_path / "model"), "--sigma-p", str(paths["P"]),
            "--sigma-l", str(paths["L"]), "--sigma-c", str(paths["C"]), "--theta", "62",
            "--h-rms", "2.21", "--out-prefix", str(prefix)]
    assert main(argv) == 0
    est = read_asc(f"{prefix}_mv.asc")
    assert est.values.shape == (8, 8) and est.valid.all()
    assert set(np.unique(read_asc(f"{prefix}_branch.asc").values)) <= {0.0, 1.0}
    first = (tmp_path / "out_mv.asc").read_bytes()
    assert main(argv) == 0
    assert (tmp_path / "out_mv.asc").read_bytes() == first

    pts = [SamplePoint("p1", 1001.5, 2006.5, 0.21, 0.1), SamplePoint("p2", 1006.5, 2001.5, 0.29, 1.5),
           SamplePoint("far", 5000.0, 5000.0, 0.3, 0.0)]
    write_samples(pts, tmp_path / "pts.csv")
    report = tmp_path / "eval.txt"
    code = main(["evaluate", "--estimates", f"{prefix}_mv.asc", "--samples",
                 str(tmp_path / "pts.csv"), "--branch", f"{prefix}_branch.asc",
                 "--out", str(report)])
    assert code == 0
    assert report.read_text().startswith("n=2\n")
    rows = (tmp_path / "eval.csv").read_text().splitlines()
    assert rows[0] == "id,x,y,mv_true,mv_est,error" and len(rows) == 3

    write_samples(pts[2:], tmp_path / "far.csv")
    assert main(["evaluate", "--estimates", f"{prefix}_mv.asc", "--samples",
                 str(tmp_path / "far.csv"), "--out", str(report)]) == 1


def test_estimate_without_c_band_warns(tmp_path, random_model, capsys):
    save_bundle(random_model, tmp_path / "model")
    paths, _ = _scene(tmp_path)
    prefix = tmp_path / "noc"
    assert main(["estimate", "--model", str(tmp_path / "model"), "--sigma-p", str(paths["P"]),
                 "--sigma-l", str(paths["L"]), "--theta", "62", "--out-prefix", str(prefix)]) == 0
    branch = read_asc(f"{prefix}_branch.asc")
    mv = read_asc(f"{prefix}_mv.asc")
    np.testing.assert_array_equal(mv.valid, branch.valid)
    if not mv.valid.all():
        assert "warning" in capsys.readouterr().err


def test_estimate_grid_mismatch(tmp_path, random_model):
    save_bundle(random_model, tmp_path / "model")
    paths, _ = _scene(tmp_path)
    r = read_asc(paths["C"])
    r.xll += 1.0
    write_asc(r, paths["C"])
    assert main(["estimate", "--model", str(tmp_path / "model"), "--sigma-p", str(paths["P"]),
                 "--sigma-l", str(paths["L"]), "--sigma-c", str(paths["C"]), "--theta", "62",
                 "--out-prefix", str(tmp_path / "x")]) == 1


def test_fit_height_lm(tmp_path, capsys):
    data = tmp_path / "h.csv"
    main(["synth", "--scenario", "veg", "--n", "400", "--height-range", "0,2.5",
          "--mv-range", "0.17,0.37", "--h-rms-range", "2.21,2.21", "--theta-range", "59,63",
          "--seed", "5", "--out", str(data)])
    out = tmp_path / "height_lm.txt"
    assert main(["fit", "--what", "height-lm", "--data", str(data), "--out", str(out)]) == 0
    assert "intercept" in out.read_text()
    assert 0.05 < read_height_lm(out).coef_l < 0.2
    assert (tmp_path / "height_lm.txt.residuals.csv").exists()
    assert "h = " in capsys.readouterr().out


def test_fit_dubois(tmp_path, capsys):
    data = tmp_path / "t.csv"
    main(["synth", "--scenario", "veg", "--n", "60", "--height-range", "0,2.5",
          "--noise-db", "0", "--seed", "5", "--out", str(data)])
    out = tmp_path / "constants.txt"
    assert main(["fit", "--what", "dubois", "--data", str(data), "--out", str(out)]) == 0
    text = (tmp_path / "constants.txt.residuals.csv").read_text().splitlines()
    assert text[0].startswith("band,")
    assert len(text) == 4


def test_console_script_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "sarsoil", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "synth" in res.stdout
