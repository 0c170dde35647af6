"""Command-line interface: ``sarsoil {synth,train,estimate,evaluate,fit}``.

Every subcommand accepts ``--config FILE`` with ``key=value`` lines whose
keys are flag names (``noise-db=0.5`` or ``noise_db=0.5``); flags given on
the command line win. Exit codes: 0 success, 1 runtime or data failure,
2 usage error. ``SARSOIL_THREADS`` caps BLAS threads.
"""

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import calibration, dubois, pipeline, raster, synth
from ._kv import read_kv
from .exceptions import InputError, SarSoilError
from .mlp import MLPRegressorLM, save_mlp

log = logging.getLogger("sarsoil")


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v <= 0:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _nonneg_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v >= 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _positive_float(text):
    v = _nonneg_float(text)
    if v == 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return v


def _float_list(n):
    def parse(text):
        try:
            vals = tuple(float(t) for t in str(text).split(","))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers") from None
        if len(vals) != n:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers")
        return vals
    return parse


def _int_list(text):
    try:
        return tuple(int(t) for t in str(text).split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated integers") from None


def _common(p):
    p.add_argument("--config", help="key=value file with default flag values")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="count", default=0)


def _wavelengths(p):
    p.add_argument(
        "--wavelengths", type=_float_list(3), default="70.5,22.8,5.6",
        help="P,L,C wavelengths in cm (default: 70.5,22.8,5.6)",
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sarsoil", description="Soil moisture retrieval from P/L/C-band SAR reflectivity."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic sample set")
    _common(p)
    p.add_argument("--scenario", choices=["bare", "veg"])
    p.add_argument("--n", type=_positive_int, default=10_000)
    p.add_argument("--noise-db", type=_nonneg_float, default=0.5)
    p.add_argument("--theta-range", type=_float_list(2))
    p.add_argument("--mv-range", type=_float_list(2))
    p.add_argument("--h-rms-range", type=_float_list(2))
    p.add_argument("--height-range", type=_float_list(2))
    _wavelengths(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth, required=("scenario", "out"))

    p = sub.add_parser("train", help="train a bare-soil or vegetated network")
    _common(p)
    p.add_argument("--scenario", choices=["bare", "veg"])
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--max-iter", type=_positive_int, default=500)
    p.add_argument("--mse-goal", type=_nonneg_float, default=1e-6)
    p.add_argument("--hidden", type=_int_list, default="20,20")
    p.set_defaults(func=cmd_train, required=("scenario", "data", "out"))

    p = sub.add_parser("estimate", help="retrieve moisture maps from reflectivity rasters")
    _common(p)
    p.add_argument("--model")
    p.add_argument("--sigma-p")
    p.add_argument("--sigma-l")
    p.add_argument("--sigma-c")
    p.add_argument("--theta", help="incidence angle in degrees, or an .asc raster")
    p.add_argument("--h-rms", type=_positive_float)
    p.add_argument("--speckle-window-m", type=_positive_float)
    p.add_argument("--out-prefix")
    p.set_defaults(
        func=cmd_estimate, required=("model", "sigma_p", "sigma_l", "theta", "out_prefix")
    )

    p = sub.add_parser("evaluate", help="compare a moisture map with ground samples")
    _common(p)
    p.add_argument("--estimates")
    p.add_argument("--samples")
    p.add_argument("--branch", help="optional branch raster for per-branch statistics")
    p.add_argument("--window-m", type=_positive_float, default=3.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate, required=("estimates", "samples", "out"))

    p = sub.add_parser("fit", help="refit the height model or the Dubois constants")
    _common(p)
    p.add_argument("--what", choices=["height-lm", "dubois"])
    p.add_argument("--data")
    p.add_argument("--init", help="constants file to start the Dubois fit from")
    _wavelengths(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit, required=("what", "data", "out"))
    return parser


def _bands(args):
    return dict(zip("PLC", args.wavelengths))


def cmd_synth(args):
    scenario = synth.Scenario.parse(args.scenario)
    overrides = {
        name: getattr(args, f"{name}_range")
        for name in ("theta", "mv", "h_rms")
        if getattr(args, f"{name}_range") is not None
    }
    if args.height_range is not None:
        overrides["crop_height"] = args.height_range
    ranges = synth.RangeSpec.for_scenario(scenario, **overrides)
    samples = synth.generate(
        scenario, ranges, args.n, args.seed, args.noise_db, wavelengths_cm=_bands(args)
    )
    synth.write_sampleset(samples, args.out)
    log.info("wrote %d %s records to %s", len(samples), scenario.value, args.out)
    return 0


def cmd_train(args):
    scenario = synth.Scenario.parse(args.scenario)
    samples = synth.read_sampleset(args.data, scenario=scenario)
    threshold = 0.5
    if scenario is synth.Scenario.BARE and np.any(samples.height >= threshold):
        raise InputError("bare scenario needs crop heights below 0.5 m")
    if scenario is synth.Scenario.VEGETATED and np.any(samples.height < threshold):
        raise InputError("vegetated scenario needs crop heights of at least 0.5 m")
    X, y = synth.to_nn_dataset(samples, scenario)
    est = MLPRegressorLM(
        hidden_layer_sizes=args.hidden, max_iter=args.max_iter,
        mse_goal=args.mse_goal, random_state=args.seed,
    ).fit(X, y)
    save_mlp(est.network_, args.out)
    report = est.report_
    rmse = float(np.sqrt(np.mean((est.predict(X) - y) ** 2)))
    text = report.to_text() + f"train_rmse_mv={rmse!r}\nlayers={est.network_.spec.layer_sizes}\n"
    Path(str(args.out) + ".report.txt").write_text(text)
    print(f"{scenario.value}: {report.iterations} iterations, final mse {report.final_mse:.3g} "
          f"({report.stop_reason}), train rmse {rmse:.4f}")
    return 0


def cmd_estimate(args):
    model = pipeline.load_bundle(args.model)
    sp = raster.read_asc(args.sigma_p)
    sl = raster.read_asc(args.sigma_l)
    sc = raster.read_asc(args.sigma_c) if args.sigma_c else None
    try:
        theta = float(args.theta)
    except ValueError:
        theta = raster.read_asc(args.theta)
    out = pipeline.estimate_raster(
        sp, sl, sc, theta, args.h_rms, model, speckle_window_m=args.speckle_window_m
    )
    for key, r in out.items():
        raster.write_asc(r, f"{args.out_prefix}_{key}.asc")
    have_pl = sp.valid & sl.valid
    lost = int(np.sum(have_pl & ~out["mv"].valid))
    branch = out["branch"].values
    print(f"pixels: {out['mv'].valid.sum()} retrieved "
          f"({int(np.sum(branch == 0))} bare, {int(np.sum(branch == 1))} vegetated), "
          f"{lost} without estimate")
    if sc is None and lost:
        print(f"warning: {lost} bare-branch pixels set to NODATA (no C-band raster)",
              file=sys.stderr)
    return 0


def cmd_evaluate(args):
    est = raster.read_asc(args.estimates)
    br = raster.read_asc(args.branch) if args.branch else None
    points = raster.read_samples(args.samples)
    if not points:
        raise InputError("samples file holds no points")
    rows = []
    for p in points:
        try:
            value = raster.window_mean(est, p.x, p.y, args.window_m)
        except SarSoilError:
            log.warning("sample %s outside the raster extent, skipped", p.id)
            continue
        b = br.value_at(p.x, p.y) if br is not None else np.nan
        value = np.nan if value == est.nodata else value
        rows.append((p.id, p.x, p.y, p.mv, value, b))
    if not rows:
        raise InputError("all sample points fall outside the raster extent")
    truth = np.array([r[3] for r in rows])
    values = np.array([r[4] for r in rows])
    branches = np.array([r[5] for r in rows]) if br is not None else None
    report = pipeline.evaluate(values, truth, branches)
    text = report.to_text()
    Path(args.out).write_text(text)
    with open(Path(args.out).with_suffix(".csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "x", "y", "mv_true", "mv_est", "error"])
        for pid, x, y, t, v, _ in rows:
            w.writerow([pid, repr(x), repr(y), repr(t), repr(float(v)), repr(float(v - t))])
    sys.stdout.write(text)
    return 0


def _write_rows(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def cmd_fit(args):
    residuals_path = str(args.out) + ".residuals.csv"
    if args.what == "height-lm":
        data = synth.read_sampleset(args.data, missing_bands=("C",))
        fit = calibration.fit_height_lm(data.sigma_l, data.sigma_p, data.height)
        calibration.write_height_lm(fit.coeffs, args.out, rmse=fit.rmse)
        q = np.percentile(fit.residuals, [0, 25, 50, 75, 100])
        _write_rows(
            [dict(quantity="height_m", n=fit.residuals.size, min=q[0], q1=q[1], median=q[2],
                  q3=q[3], max=q[4], rmse=fit.rmse)],
            residuals_path,
        )
        c = fit.coeffs
        print(f"h = {c.intercept:.6g} + {c.coef_l:.6g}*sigma_L + {c.coef_p:.6g}*sigma_P "
              f"(rmse {fit.rmse:.4f} m)")
        return 0

    bands = _bands(args)
    data = synth.read_sampleset(args.data, missing_bands=("P", "L", "C"))
    init = calibration.read_constants(args.init) if args.init else dubois.DuboisConstants()
    fit = calibration.fit_dubois_constants(data, init, bands)
    calibration.write_constants(fit.constants, args.out)
    rows = calibration.residual_summary(data, fit.constants, bands, wavelength_correction=False)
    rms = {}
    obs = calibration._band_observations(data, bands)
    model = dubois.forward_db(obs["theta"], obs["h_rms"], obs["eps"], obs["lam"],
                              obs["height"], fit.constants)
    err = model - obs["sigma"]
    for band in bands:
        sel = obs["band"] == band
        if sel.any():
            rms[band] = float(np.sqrt(np.mean(err[sel] ** 2)))
    for row in rows:
        row["fitted_rmse_db"] = rms.get(row["band"])
    _write_rows(rows, residuals_path)
    overall = float(np.sqrt(fit.mse))
    print(f"dubois fit: rmse {overall:.4g} dB after {fit.iterations} iterations; "
          + ", ".join(f"{k}={v:.6g}" for k, v in fit.constants.to_dict().items()))
    return 0


def _apply_config(parser, argv):
    args = parser.parse_args(argv)
    if args.config:
        try:
            values = read_kv(args.config)
        except (OSError, SarSoilError) as exc:
            parser.exit(2, f"sarsoil: error: cannot read config: {exc}\n")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        defaults = {}
        for key, value in values.items():
            dest = key.replace("-", "_")
            if dest not in known or dest in ("config", "func", "required"):
                parser.exit(2, f"sarsoil: error: unknown config key {key!r}\n")
            defaults[dest] = value
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    missing = [d for d in args.required if getattr(args, d, None) in (None, "")]
    if missing:
        flags = ", ".join("--" + d.replace("_", "-") for d in missing)
        parser.error(f"{args.command}: missing required option(s) {flags}")
    return args


def main(argv=None):
    parser = build_parser()
    args = _apply_config(parser, argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    threads = os.environ.get("SARSOIL_THREADS")
    try:
        limit = int(threads) if threads else None
    except ValueError:
        parser.error("SARSOIL_THREADS must be an integer")
    try:
        with threadpool_limits(limits=limit):
            return args.func(args)
    except (SarSoilError, OSError) as exc:
        print(f"sarsoil: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
