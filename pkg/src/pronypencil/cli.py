"""Command-line front end: reproducible experiments emitting CSV data.

Subcommands: synth, reconstruct, localize, mc-bound, gap-map,
sweep-separation. Every command is deterministic given --seed (default: the
PRONY_SEED environment variable, else 0).

Exit codes: 0 success, 2 configuration error, 3 numerical-stage error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import microscopy, model, pencil, randsphere
from .presets import load_preset, preset_names

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(Exception):
    pass


def _default_seed() -> int:
    env = os.environ.get("PRONY_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"PRONY_SEED must be an integer, got {env!r}")
    return 0


def _parse_int_list(text: str):
    return [int(x) for x in text.split(",") if x.strip()]


def _parse_float_list(text: str):
    return [float(x) for x in text.split(",") if x.strip()]


def _resolve_source(args, seed):
    """Preset if given, else random parameters; returns (params, b, P, n)."""
    if args.preset:
        pre = load_preset(args.preset)
        b = args.b if args.b is not None else pre.b
        P = args.P if args.P is not None else pre.P
        n = args.n if args.n is not None else pre.n
        return pre.params, b, P, n
    if args.M is None or args.d is None:
        raise ConfigError("either --preset or both --M and --d are required")
    params = model.random_params(args.M, args.d, seed=seed, min_sep=args.min_sep)
    return params, (args.b if args.b is not None else 150.0), args.P, (
        args.n if args.n is not None else 4
    )


def _reconstruct_config(args, seed) -> pencil.ReconstructConfig:
    cfg = pencil.ReconstructConfig(seed=seed)
    if args.rank_tol is not None:
        if not 0 < args.rank_tol < 1:
            raise ConfigError("--rank-tol must lie in (0, 1)")
        cfg.rank_tol = args.rank_tol
    if args.M_override is not None:
        if args.M_override < 1:
            raise ConfigError("--M must be positive")
        cfg.M_override = args.M_override
    if args.gap_tol is not None:
        if args.gap_tol <= 0:
            raise ConfigError("--gap-tol must be positive")
        cfg.gap_tol = args.gap_tol
    if args.retries is not None:
        if args.retries < 1:
            raise ConfigError("--retries must be at least 1")
        cfg.max_retries = args.retries
    return cfg


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args):
    seed = args.seed
    params, b, P, n = _resolve_source(args, seed)
    out = _outdir(args)
    model.write_params_csv(out / "params.csv", params)
    table = model.sample_grid(params, n)
    if args.snr_samples is not None:
        if args.snr_samples <= 0:
            raise ConfigError("--snr-samples must be positive")
        table = model.add_noise(table, args.snr_samples, seed=seed)
    model.write_samples_csv(out / "samples.csv", table)
    written = ["params.csv", "samples.csv"]
    if P is not None:
        psf = microscopy.PSFModel(b=b, d=params.d)
        image = microscopy.render_image(params, psf, P, shift_radius=args.shift_radius)
        if args.snr is not None:
            if args.snr <= 0:
                raise ConfigError("--snr must be positive")
            image = model.add_noise(image, args.snr, seed=seed)
        microscopy.write_image_csv(out / "image.csv", image)
        written.append("image.csv")
        if params.d == 2:
            microscopy.write_image_pgm(out / "image.pgm", image)
            written.append("image.pgm")
    print(f"synth: wrote {', '.join(written)} to {out}")
    return EXIT_OK


def cmd_reconstruct(args):
    table = model.read_samples_csv(args.infile)
    cfg = _reconstruct_config(args, args.seed)
    result = pencil.reconstruct(table, cfg)
    out = _outdir(args)
    pencil.write_result_csv(out / "result.csv", result)
    pencil.write_report(out / "report.txt", result)
    print(
        f"reconstruct: M={result.M_detected} residual={result.residual:.3e} "
        f"min_gap={result.min_gap:.3e} -> {out}"
    )
    return EXIT_OK


def cmd_localize(args):
    image = microscopy.read_image(args.infile)
    if args.b is None:
        raise ConfigError("--b (PSF sharpness) is required for localization")
    psf = microscopy.PSFModel(b=args.b, d=image.d)
    n = args.n if args.n is not None else 4
    cfg = _reconstruct_config(args, args.seed)
    t0 = time.perf_counter()
    result = microscopy.localize(
        image, psf, n, cfg, subtract_background=args.subtract_background
    )
    elapsed = time.perf_counter() - t0
    out = _outdir(args)
    pencil.write_result_csv(out / "locations.csv", result)
    pencil.write_report(
        out / "report.txt", result, extra={"pipeline_seconds": f"{elapsed:.6f}"}
    )
    print(f"localize: M={result.M_detected} in {elapsed*1e3:.1f} ms -> {out}")
    return EXIT_OK


def cmd_mc_bound(args):
    ds = _parse_int_list(args.d_list)
    epss = _parse_float_list(args.epsilon_list)
    if any(d < 1 for d in ds):
        raise ConfigError("--d values must be positive")
    if any(not 0 <= e <= 1 for e in epss):
        raise ConfigError("--epsilon values must lie in [0, 1]")
    if args.trials < 1:
        raise ConfigError("--trials must be positive")
    reports = []
    for i, d in enumerate(ds):
        # canonical pair: unit difference along the first axis
        zi = np.zeros(d, complex)
        zj = np.zeros(d, complex)
        zi[0] = 1.0
        zj[0] = -1.0
        for j, eps in enumerate(epss):
            rep = randsphere.mc_gap_experiment(
                (zi, zj), eps, args.trials, seed=args.seed + 1000 * i + j
            )
            reports.append(rep)
    randsphere.write_gap_reports_csv(args.out, reports, seed=args.seed, trials=args.trials)
    print(f"mc-bound: wrote {len(reports)} rows to {args.out}")
    violations = [r for r in reports if r.empirical_freq > r.bound]
    if violations:
        for r in violations:
            print(
                f"bound violated at d={r.d} eps={r.epsilon}: "
                f"freq {r.empirical_freq:.4g} > {r.bound:.4g}",
                file=sys.stderr,
            )
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_gap_map(args):
    if args.mode == "hopf-d2":
        want_d = 2
    elif args.mode == "real-sphere-d3":
        want_d = 3
    else:
        raise ConfigError(f"unknown mode {args.mode!r}")
    try:
        n_theta, n_phi = (int(x) for x in args.resolution.lower().split("x"))
    except ValueError:
        raise ConfigError("--resolution must look like 200x400")
    if args.preset:
        params = load_preset(args.preset).params
        if params.d != want_d:
            raise ConfigError(f"mode {args.mode} needs d={want_d}, preset has d={params.d}")
        source = params
    else:
        M = args.M if args.M is not None else 5
        if args.mode == "hopf-d2":
            source = model.random_params(M, 2, seed=args.seed)
        else:
            # arbitrary real node vectors: the great-circle geometry needs
            # real coordinates, which torus nodes do not have
            rng = np.random.default_rng(args.seed)
            source = rng.standard_normal((M, 3))
    theta, phi, gap = randsphere.emit_gap_map(source, args.mode, (n_theta, n_phi))
    randsphere.write_gap_map_csv(args.out, theta, phi, gap, mode=args.mode, seed=args.seed)
    finite = gap[np.isfinite(gap)]
    if finite.size:
        minima = randsphere.count_local_minima(gap, 1e-2)
        print(
            f"gap-map: {args.mode} {n_theta}x{n_phi}, min gap {finite.min():.3e}, "
            f"{minima} local minima below 1e-2 -> {args.out}"
        )
    else:
        print(f"gap-map: single source, gap undefined -> {args.out}")
    return EXIT_OK


def cmd_sweep_separation(args):
    seeds = args.seeds
    if seeds < 1:
        raise ConfigError("--seeds must be positive")
    rows = []
    for preset_name in ("sep-q283", "sep-q057"):
        pre = load_preset(preset_name)
        snr = args.snr if args.snr is not None else pre.sweep_snr
        rank_tol = args.rank_tol if args.rank_tol is not None else pre.sweep_rank_tol
        P = args.P if args.P is not None else pre.P
        psf = microscopy.PSFModel(b=pre.b, d=2)
        clean = microscopy.render_image(pre.params, psf, P)
        for n in (1, 4):
            errs = []
            fails = 0
            for s in range(seeds):
                noisy = model.add_noise(clean, snr, seed=args.seed + 7919 * s)
                try:
                    res = microscopy.localize(
                        noisy,
                        psf,
                        n,
                        pencil.ReconstructConfig(rank_tol=rank_tol, seed=args.seed + s),
                    )
                    if res.M_detected != pre.params.M:
                        err = np.inf
                    else:
                        _, per = model.match_locations(pre.params.t, res.params.t)
                        err = float(per.max())
                except pencil.PencilError:
                    err = np.inf
                failed = not np.isfinite(err) or err > 0.05
                fails += failed
                errs.append(err)
            errs = np.array(errs)
            finite = errs[np.isfinite(errs)]
            rows.append(
                dict(
                    preset=preset_name,
                    q=pre.q_target,
                    n=n,
                    seeds=seeds,
                    median_err=float(np.median(errs)),
                    max_finite_err=float(finite.max()) if finite.size else float("nan"),
                    fail_rate=fails / seeds,
                )
            )
    with open(args.out, "w") as fh:
        fh.write(f"# seed={args.seed} seeds={seeds}\n")
        fh.write("preset,q,n,seeds,median_err,max_finite_err,fail_rate\n")
        for r in rows:
            fh.write(
                f"{r['preset']},{r['q']},{r['n']},{r['seeds']},"
                f"{r['median_err']:.17g},{r['max_finite_err']:.17g},{r['fail_rate']:.17g}\n"
            )
    for r in rows:
        print(
            f"sweep: {r['preset']} n={r['n']} median_err={r['median_err']:.3e} "
            f"fail_rate={r['fail_rate']:.2f}"
        )
    print(f"sweep: wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pronypencil",
        description="Sparse exponential-sum recovery by a randomized matrix pencil.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int, default=None, help="RNG seed (default: PRONY_SEED or 0)")

    def add_recon_flags(p):
        p.add_argument("--M", dest="M_override", type=int, default=None,
                       help="override rank detection with a fixed model order")
        p.add_argument("--rank-tol", type=float, default=None)
        p.add_argument("--gap-tol", type=float, default=None)
        p.add_argument("--retries", type=int, default=None)

    p = sub.add_parser("synth", help="generate parameters, samples and optionally an image")
    p.add_argument("--preset", choices=preset_names(), default=None)
    p.add_argument("--M", type=int, default=None)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--min-sep", type=float, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--P", type=int, default=None)
    p.add_argument("--b", type=float, default=None)
    p.add_argument("--snr", type=float, default=None, help="add image noise at this SNR")
    p.add_argument("--snr-samples", type=float, default=None,
                   help="add sample-table noise at this SNR (synthetic stress tests)")
    p.add_argument("--shift-radius", type=int, default=1)
    p.add_argument("--out", required=True)
    add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("reconstruct", help="recover parameters from a sample-table CSV")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    add_recon_flags(p)
    add_common(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("localize", help="recover source locations from an image (CSV or PGM)")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--b", type=float, default=None, required=False)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--subtract-background", action="store_true",
                   help="subtract the median pixel value before the DFT")
    p.add_argument("--out", required=True)
    add_recon_flags(p)
    add_common(p)
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("mc-bound", help="Monte Carlo check of the gap-probability bound")
    p.add_argument("--d", dest="d_list", default="2,3,5", help="comma-separated dimensions")
    p.add_argument("--epsilon", dest="epsilon_list", default="0.01,0.05,0.1")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--out", required=True)
    add_common(p)
    p.set_defaults(func=cmd_mc_bound)

    p = sub.add_parser("gap-map", help="minimal eigenvalue gap of C_mu over a sphere grid")
    p.add_argument("--mode", choices=("hopf-d2", "real-sphere-d3"), required=True)
    p.add_argument("--preset", choices=preset_names(), default=None)
    p.add_argument("--M", type=int, default=None)
    p.add_argument("--resolution", default="200x400")
    p.add_argument("--out", required=True)
    add_common(p)
    p.set_defaults(func=cmd_gap_map)

    p = sub.add_parser("sweep-separation", help="separation-vs-n study over the sep presets")
    p.add_argument("--seeds", type=int, default=25)
    p.add_argument("--snr", type=float, default=None, help="override the presets' sweep SNR")
    p.add_argument("--rank-tol", type=float, default=None)
    p.add_argument("--P", type=int, default=None)
    p.add_argument("--out", required=True)
    add_common(p)
    p.set_defaults(func=cmd_sweep_separation)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.seed is None:
            args.seed = _default_seed()
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except pencil.StageError as exc:
        print(f"numerical failure in {exc.stage}: {exc.cause}", file=sys.stderr)
        return EXIT_NUMERIC
    except pencil.PencilError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
