"""Command-line entry point: ``bmlr {recover,simulate,sweep,bounds,denoise}``.

Settings come from built-in defaults, then an optional flat JSON ``--config``
file, then command-line flags (flags win).  Every output file carries the
resolved settings, the seed and the package version.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import denoise as dn
from .bounds import ALL_BOUNDS
from .errors import BMLRError, ConfigError
from .estimators import compute_C_hat, recover_noiseless_canonical, recover_noiseless_general
from .linalg import max_norm
from .model import DesignKind, ModelParameters, generate_A_star, generate_B_star, generate_dataset
from .simulation import (
    DEFAULT_TRIALS,
    SweepSpec,
    TrialConfig,
    aggregate_errors,
    emit_coverage,
    emit_results,
    run_sweep,
    run_trial,
    trial_seed,
    verify_bound_coverage,
)

DEFAULTS = {
    "seed": 0, "format": "csv", "jobs": 1,
    "n": 15, "m": 13, "p": 14, "q": 12, "T": 1000, "sigma_r": 1.0, "sigma_c": 1.0,
    "design": "uniform", "delta": None, "trials": DEFAULT_TRIALS,
}
COMMAND_DEFAULTS = {
    "recover": {"n": 3, "m": 2, "p": 2, "q": 2, "T": None, "design": "canonical",
                "format": "json"},
    "bounds": {"trials": 2000, "delta": 0.1,
               "bounds": ["B_max", "B_op", "B_frob", "A_max", "B_sparse_frob", "A_sparse_frob"],
               "grid": [
                   {"n": 4, "m": 3, "p": 3, "q": 4, "T": 60, "sigma_r": 0.02},
                   {"n": 6, "m": 2, "p": 5, "q": 3, "T": 40, "sigma_r": 0.02},
                   {"n": 3, "m": 4, "p": 4, "q": 2, "T": 150, "sigma_r": 0.02},
               ]},
    "sweep": {"param": "T", "values": [250, 500, 1000, 2000, 4000]},
    "denoise": {"epsilon": [0.01, 0.02, 0.05], "train": 200, "test": 50,
                "height": 8, "width": 8},
}
_CONFIG_KEYS = ("n", "m", "p", "q", "T", "sigma_r", "sigma_c", "design", "delta")


def _common(sub):
    sub.add_argument("--config", type=Path, help="flat JSON file with settings")
    sub.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    sub.add_argument("--out", type=Path, required=True, help="output file")
    sub.add_argument("--format", choices=("csv", "json"))
    sub.add_argument("--jobs", type=int, help="concurrent trials")


def _model_flags(sub):
    for name in ("n", "m", "p", "q", "T"):
        sub.add_argument(f"--{name}", type=int)
    sub.add_argument("--sigma-r", dest="sigma_r", type=float)
    sub.add_argument("--sigma-c", dest="sigma_c", type=float)
    sub.add_argument("--design", choices=[k.value for k in DesignKind])


def build_parser():
    parser = argparse.ArgumentParser(prog="bmlr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("recover", help="exact recovery from noiseless data")
    _common(p)
    _model_flags(p)

    p = subs.add_parser("simulate", help="independent trials at one configuration")
    _common(p)
    _model_flags(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--delta", type=float, help="enable thresholded estimators")

    p = subs.add_parser("sweep", help="trials over a range of one parameter")
    _common(p)
    _model_flags(p)
    p.add_argument("--param", choices=("n", "m", "p", "q", "T", "sigma_r", "sigma_c"))
    p.add_argument("--values", type=float, nargs="+")
    p.add_argument("--trials", type=int)
    p.add_argument("--summary", type=Path, help="summary file (default: <out>_summary)")

    p = subs.add_parser("bounds", help="Monte Carlo coverage of the tail bounds")
    _common(p)
    p.add_argument("--bounds", nargs="+", choices=ALL_BOUNDS)
    p.add_argument("--trials", type=int)
    p.add_argument("--delta", type=float)

    p = subs.add_parser("denoise", help="fit and evaluate image corrections")
    _common(p)
    p.add_argument("--images", type=Path, help="directory of equal-size RGB PNGs")
    p.add_argument("--epsilon", type=float, nargs="+")
    p.add_argument("--train", type=int, help="training images (first in name order)")
    p.add_argument("--test", type=int, help="test images (synthetic mode)")
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--preview-dir", type=Path)
    p.add_argument("--corrections-dir", type=Path)
    return parser


def resolve_settings(args):
    settings = dict(DEFAULTS)
    settings.update(COMMAND_DEFAULTS.get(args.command, {}))
    if args.config is not None:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        settings.update(loaded)
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        settings[key] = value
    settings["command"] = args.command
    return settings


def _metadata(settings):
    clean = {k: (str(v) if isinstance(v, Path) else v) for k, v in settings.items()}
    return {"command": settings["command"], "seed": settings["seed"],
            "version": __version__, "config": clean}


def _trial_config(settings):
    return TrialConfig(**{k: settings[k] for k in _CONFIG_KEYS if k in settings})


def cmd_recover(settings):
    kind = DesignKind.parse(settings["design"])
    n, m, p, q = (int(settings[k]) for k in ("n", "m", "p", "q"))
    T = settings.get("T")
    if T is None:
        T = m * q if kind is DesignKind.CANONICAL else 2 * m * q
    T = int(T)
    if T < m * q:
        raise ConfigError(f"T={T} is below mq={m * q}; the design cannot span the space")
    seed = int(settings["seed"])
    params = ModelParameters(generate_A_star(n, m, seed), generate_B_star(q, p, seed), 0.0, 0.0)
    data = generate_dataset(params, kind, T, seed)
    results = {}
    if kind is DesignKind.CANONICAL:
        results["canonical"] = recover_noiseless_canonical(data.responses, m)
    results["general"] = recover_noiseless_general(compute_C_hat(data))
    rows = []
    for method, (A, B) in results.items():
        rows.append({"method": method,
                     "errA_max": max_norm(A - params.A_star),
                     "errB_max": max_norm(B - params.B_star),
                     "A": A.tolist(), "B": B.tolist()})
    out, fmt = Path(settings["out"]), settings["format"]
    if fmt == "json":
        doc = {"metadata": _metadata(settings), "A_star": params.A_star.tolist(),
               "B_star": params.B_star.tolist(), "results": rows}
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(doc, indent=2) + "\n")
    else:
        emit_results([{k: r[k] for k in ("method", "errA_max", "errB_max")} for r in rows],
                     out, "csv", _metadata(settings))
    for r in rows:
        print(f"{r['method']}: max|A-A*| = {r['errA_max']:.3e}, "
              f"max|B-B*| = {r['errB_max']:.3e}")
    return 0


def cmd_simulate(settings):
    cfg = _trial_config(settings)
    trials, seed = int(settings["trials"]), int(settings["seed"])
    records = []
    for t in range(trials):
        rec = run_trial(cfg, trial_seed(seed, 0, t))
        rec.trial = t
        records.append(rec)
    failures = sum(not r.ok for r in records)
    meta = dict(_metadata(settings), failures=failures)
    emit_results(records, settings["out"], settings["format"], meta)
    print(f"{trials} trials, {failures} failed -> {settings['out']}")
    return 0


def cmd_sweep(settings):
    spec = SweepSpec(_trial_config(settings), settings["param"],
                     tuple(_sweep_value(settings["param"], v) for v in settings["values"]),
                     trials=int(settings["trials"]), seed=int(settings["seed"]))
    records = run_sweep(spec, jobs=int(settings["jobs"]))
    failures = sum(not r.ok for r in records)
    meta = dict(_metadata(settings), failures=failures, trials_per_point=spec.trials)
    out = Path(settings["out"])
    emit_results(records, out, settings["format"], meta)
    summary = settings.get("summary") or out.with_name(f"{out.stem}_summary{out.suffix}")
    emit_results(aggregate_errors(records), summary, settings["format"],
                 dict(meta, std="population standard deviation over successful trials"))
    print(f"{len(records)} records ({failures} failed) -> {out}; summary -> {summary}")
    return 0


def _sweep_value(param, v):
    if param in ("sigma_r", "sigma_c"):
        return float(v)
    if float(v) != int(v):
        raise ConfigError(f"{param} values must be integers, got {v}")
    return int(v)


def cmd_bounds(settings):
    base = {k: settings[k] for k in _CONFIG_KEYS if k in settings and k != "delta"}
    grid = []
    for point in settings["grid"]:
        cfg = dict(base)
        cfg.update(point)
        A, B = cfg.pop("A_star", None), cfg.pop("B_star", None)
        cfg["design"] = "orthogonal"
        cfg.pop("delta", None)
        tc = TrialConfig(**cfg)
        if A is None and B is None:
            grid.append(tc)
        elif A is None or B is None:
            raise ConfigError("grid points must give both A_star and B_star or neither")
        else:
            grid.append((tc, ModelParameters(np.array(A, dtype=float), np.array(B, dtype=float),
                                             tc.sigma_r, tc.sigma_c)))
    reports = verify_bound_coverage(settings["bounds"], grid, int(settings["trials"]),
                                    float(settings["delta"]), seed=int(settings["seed"]),
                                    jobs=int(settings["jobs"]))
    emit_coverage(reports, settings["out"], settings["format"], _metadata(settings))
    for r in reports:
        verdict = "ok" if r.passed else "VIOLATED"
        print(f"{r.bound:<16} freq={r.frequency:.4f} limit={r.limit:.4f} {verdict}")
    return 0


def cmd_denoise(settings):
    seed = int(settings["seed"])
    if settings.get("images"):
        images = dn.load_png_dir(settings["images"])
        n_train = int(settings["train"])
        if n_train >= images.shape[0]:
            raise ConfigError(f"need more than {n_train} images to hold out a test set")
        train, test = images[:n_train], images[n_train:]
    else:
        H, W = int(settings["height"]), int(settings["width"])
        train = dn.synthetic_batch(int(settings["train"]), H, W, seed=seed)
        test = dn.synthetic_batch(int(settings["test"]), H, W, seed=seed + 1)
    rows = []
    for ei, eps in enumerate(settings["epsilon"]):
        report, noisy, corrected, corrections, _ = dn.run_pipeline(
            train, test, float(eps), seed=seed + 1000 * (ei + 1))
        for i, (don, doc) in enumerate(zip(report.D_on, report.D_oc)):
            rows.append({"epsilon": float(eps), "image_index": i,
                         "D_on": float(don), "D_oc": float(doc)})
        print(f"eps={eps}: mean D_on={report.mean_on:.4f} (std {report.std_on:.4f}), "
              f"mean D_oc={report.mean_oc:.4f} (std {report.std_oc:.4f})")
        if settings.get("preview_dir"):
            pdir = Path(settings["preview_dir"])
            pdir.mkdir(parents=True, exist_ok=True)
            for i in range(min(4, test.shape[0])):
                for label, img in (("original", test[i]), ("noisy", noisy[i]),
                                   ("corrected", corrected[i])):
                    dn.save_png(pdir / f"eps{eps}_img{i}_{label}.png", img)
        if settings.get("corrections_dir"):
            dn.save_corrections(corrections, Path(settings["corrections_dir"]) / f"eps{eps}",
                                {"epsilon": float(eps), "seed": seed})
    emit_results(rows, settings["out"], settings["format"], _metadata(settings))
    return 0


COMMANDS = {"recover": cmd_recover, "simulate": cmd_simulate, "sweep": cmd_sweep,
            "bounds": cmd_bounds, "denoise": cmd_denoise}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        settings = resolve_settings(args)
        return COMMANDS[args.command](settings)
    except (BMLRError, OSError, ValueError, TypeError) as exc:
        print(f"bmlr {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
