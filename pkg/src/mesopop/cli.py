"""Experiment runner: `mesopop <subcommand> [flags]`.

Subcommands: meso, multi, micro, macro, pdmp, couple, psd, fig1, selftest.
Configuration is a JSON file (schema in the README); command-line flags
override config fields.  Every run writes its outputs (CSV + PNG) plus a
manifest.json recording the fully resolved config, the seed, the code
version and the wall time; re-running from a manifest reproduces the CSVs
byte-identically.

Exit codes: 0 success, 1 configuration error, 2 numerical abort, 3 I/O
error.  The `selftest` recipe exits 0 iff every reduced-scale invariant
check passes.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .core import NumericsError, PopulationParams
from .macro import NonConvergence, macro_solve
from .meso import LambdaMode, meso_simulate
from .micro import micro_simulate
from .multi import MultiPopConfig, multi_simulate
from .pdmp import ParticleMeasure, pdmp_couple, pdmp_simulate
from .analysis import psd_bartlett, renewal_psd
from .traces import (ActivityTrace, params_from_dict, read_trace_csv,
                     write_jump_log_csv, write_manifest,
                     write_multi_trace_csv, write_raster_csv,
                     write_spectrum_csv, write_trace_csv, _write_csv)


class ConfigError(ValueError):
    pass


def _check_keys(d: dict, allowed, required, ctx: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{ctx}: expected an object, got {type(d).__name__}")
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"{ctx}: unknown keys {sorted(unknown)}")
    missing = set(required) - set(d)
    if missing:
        raise ConfigError(f"{ctx}: missing keys {sorted(missing)}")


def _params_from_config(d: dict, ctx: str = "params") -> PopulationParams:
    _check_keys(d, {"N", "tau_m", "mu", "J", "f", "delta_abs", "tau_s", "d"},
                {"N", "tau_m", "mu", "f"}, ctx)
    fd = d["f"]
    if fd.get("kind") == "exponential":
        _check_keys(fd, {"kind", "c", "theta", "delta_u"}, {"kind"}, ctx + ".f")
    elif fd.get("kind") == "sigmoid":
        _check_keys(fd, {"kind", "f_min", "f_max", "theta", "slope"}, {"kind"},
                    ctx + ".f")
    else:
        raise ConfigError(f"{ctx}.f.kind must be 'exponential' or 'sigmoid'")
    try:
        return params_from_dict(d)
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"{ctx}: {exc}") from exc


def _lambda_mode(d) -> LambdaMode:
    if d is None:
        return LambdaMode("full")
    _check_keys(d, {"kind", "rate"}, {"kind"}, "lambda_mode")
    try:
        return LambdaMode.from_dict(d)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"lambda_mode: {exc}") from exc


def load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if isinstance(doc, dict) and "config" in doc and "simulator" not in doc:
        doc = doc["config"]  # manifest round-trip
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return doc


_DEMO_F = {"kind": "exponential", "c": 10.0, "theta": 10.0, "delta_u": 1.0}
_DEMO_PARAMS = {"N": 200, "tau_m": 0.02, "mu": 20.0, "J": 0.0, "f": _DEMO_F}
_DEMO_SIGMOID = {"kind": "sigmoid", "f_min": 0.1, "f_max": 100.0,
                 "theta": 10.0, "slope": 1.0}

_COMMON_KEYS = {"simulator", "params", "duration", "dt", "seed", "out",
                "lambda_mode"}


def _resolve(cfg: dict, args, defaults: dict) -> dict:
    merged = dict(defaults)
    merged.update(cfg)
    for name in ("seed", "out", "duration", "dt"):
        v = getattr(args, name, None)
        if v is not None:
            merged[name] = v
    merged["out"] = str(merged["out"])
    return merged


def _finish(outdir: Path, cfg: dict, seed, t0: float, outputs):
    write_manifest(outdir / "manifest.json", cfg, seed, time.time() - t0,
                   outputs)
    for p in outputs:
        print(p)


def _maybe_plot(args) -> bool:
    return not getattr(args, "no_plot", False)


def _seed_list(cfg, args):
    base = int(cfg["seed"])
    sweep = getattr(args, "sweep", None) or 1
    return [base + k for k in range(sweep)]


def _fan_seeds(seeds, run_one):
    """Run one isolated job per seed, across worker threads for sweeps.

    Results come back in seed order; determinism is per-seed, so the
    schedule cannot change any output.
    """
    if len(seeds) == 1:
        return [run_one(seeds[0])]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=min(len(seeds), 8)) as pool:
        return list(pool.map(run_one, seeds))


def _run_meso(cfg: dict, args) -> list:
    _check_keys(cfg, _COMMON_KEYS | {"mean_field", "history_tau_mult"},
                set(), "config")
    params = _params_from_config(cfg["params"])
    mode = _lambda_mode(cfg.get("lambda_mode"))
    outdir = Path(cfg["out"])
    seeds = _seed_list(cfg, args)

    def run_one(seed):
        tr = meso_simulate(params, mode, float(cfg["duration"]),
                           float(cfg["dt"]), seed,
                           mean_field=bool(cfg.get("mean_field", False)),
                           history_tau_mult=float(cfg.get("history_tau_mult", 5.0)))
        suffix = f"_seed{seed}" if len(seeds) > 1 else ""
        path = outdir / f"trace{suffix}.csv"
        write_trace_csv(path, tr)
        return path, tr, seed

    out = []
    traces = []
    for path, tr, seed in _fan_seeds(seeds, run_one):
        out.append(path)
        traces.append((tr, seed))
    if _maybe_plot(args):
        from . import plots
        fig = outdir / "trace.png"
        plots.save_trace_figure(fig, [t for t, _ in traces],
                                [f"seed {s}" for _, s in traces],
                                title=f"mesoscopic run ({mode.kind})")
        out.append(fig)
    return out


def _run_multi(cfg: dict, args) -> list:
    _check_keys(cfg, {"simulator", "pops", "J_matrix", "duration", "dt",
                      "seed", "out", "history_tau_mult"},
                {"pops", "J_matrix"}, "config")
    pops = [_params_from_config(p, f"pops[{i}]")
            for i, p in enumerate(cfg["pops"])]
    config = MultiPopConfig(pops, cfg["J_matrix"])
    outdir = Path(cfg["out"])
    traces = multi_simulate(config, float(cfg["duration"]), float(cfg["dt"]),
                            int(cfg["seed"]),
                            history_tau_mult=float(cfg.get("history_tau_mult", 5.0)))
    out = []
    for k, tr in enumerate(traces):
        path = outdir / f"trace_pop{k + 1}.csv"
        write_multi_trace_csv(path, tr, k)
        out.append(path)
    if _maybe_plot(args):
        from . import plots
        fig = outdir / "traces.png"
        plots.save_trace_figure(fig, traces,
                                [f"pop {k + 1}" for k in range(len(traces))],
                                title="multi-population run")
        out.append(fig)
    return out


def _run_micro(cfg: dict, args) -> list:
    _check_keys(cfg, _COMMON_KEYS, set(), "config")
    params = _params_from_config(cfg["params"])
    outdir = Path(cfg["out"])
    seeds = _seed_list(cfg, args)

    def run_one(seed):
        tr, raster = micro_simulate(params, float(cfg["duration"]),
                                    float(cfg["dt"]), seed)
        suffix = f"_seed{seed}" if len(seeds) > 1 else ""
        tpath = outdir / f"trace{suffix}.csv"
        rpath = outdir / f"raster{suffix}.csv"
        write_trace_csv(tpath, tr)
        write_raster_csv(rpath, raster[:, 0], raster[:, 1].astype(int))
        return [tpath, rpath], raster, suffix

    out = []
    for paths, raster, suffix in _fan_seeds(seeds, run_one):
        out += paths
        if _maybe_plot(args) and not suffix:
            from . import plots
            fig = outdir / "raster.png"
            plots.save_raster_figure(fig, raster, params.N,
                                     t_range=(0, min(1.0, float(cfg["duration"]))),
                                     title="microscopic raster")
            out.append(fig)
    return out


def _run_macro(cfg: dict, args) -> list:
    _check_keys(cfg, {"simulator", "params", "nu0", "duration", "dt", "seed",
                      "out", "truncate_history"}, {"params"}, "config")
    params = _params_from_config(cfg["params"])
    nu0 = [(float(u), float(w)) for u, w in cfg.get("nu0", [[0.0, 1.0]])]
    outdir = Path(cfg["out"])
    sol = macro_solve(params, nu0, float(cfg["duration"]), float(cfg["dt"]),
                      truncate_history=bool(cfg.get("truncate_history", False)))
    path = outdir / "macro.csv"
    _write_csv(path, "t,A,mass_residual", (sol.times, sol.A, sol.mass_residual))
    out = [path]
    if _maybe_plot(args):
        from . import plots
        tr = ActivityTrace(dt=sol.dt, A=sol.A, Abar=sol.A,
                           mass=1.0 + sol.mass_residual,
                           p_lambda=np.zeros_like(sol.A))
        fig = outdir / "macro.png"
        plots.save_trace_figure(fig, [tr], ["macro"], title="mean-field solution")
        out.append(fig)
    return out


def _measure_config(cfg: dict, key: str):
    atoms = cfg.get(key, [[0.0, 1.0]])
    return ParticleMeasure.from_atoms([(float(u), float(w)) for u, w in atoms])


def _run_pdmp(cfg: dict, args) -> list:
    _check_keys(cfg, {"simulator", "params", "nu0", "Lambda", "duration",
                      "dt", "seed", "out", "sample_dt"},
                {"params", "Lambda"}, "config")
    params = _params_from_config(cfg["params"])
    outdir = Path(cfg["out"])
    seeds = _seed_list(cfg, args)

    def run_one(seed):
        res = pdmp_simulate(_measure_config(cfg, "nu0"), params,
                            float(cfg["Lambda"]), float(cfg["duration"]),
                            seed, sample_dt=cfg.get("sample_dt"))
        suffix = f"_seed{seed}" if len(seeds) > 1 else ""
        jpath = outdir / f"jumps{suffix}.csv"
        spath = outdir / f"samples{suffix}.csv"
        write_jump_log_csv(jpath, res.jump_times)
        _write_csv(spath, "t,mass,rate",
                   (res.sample_t, res.sample_mass, res.sample_rate))
        return [jpath, spath], res, suffix

    out = []
    for paths, res, suffix in _fan_seeds(seeds, run_one):
        out += paths
        if _maybe_plot(args) and not suffix:
            from . import plots
            fig = outdir / "pdmp.png"
            plots.save_pdmp_figure(fig, res, title="event-driven run")
            out.append(fig)
    return out


def _run_couple(cfg: dict, args) -> list:
    _check_keys(cfg, {"simulator", "params", "nu0", "nu0_tilde", "Lambda",
                      "duration", "dt", "seed", "out", "sample_dt"},
                {"params", "Lambda", "nu0", "nu0_tilde"}, "config")
    params = _params_from_config(cfg["params"])
    outdir = Path(cfg["out"])
    run = pdmp_couple(_measure_config(cfg, "nu0"),
                      _measure_config(cfg, "nu0_tilde"), params,
                      float(cfg["Lambda"]), float(cfg["duration"]),
                      int(cfg["seed"]), sample_dt=cfg.get("sample_dt"))
    jpath = outdir / "jumps.csv"
    spath = outdir / "samples.csv"
    write_jump_log_csv(jpath, run.jump_times,
                       [run.side_name(s) for s in run.sides])
    _write_csv(spath, "t,rate_gap,mass_left,mass_right",
               (run.sample_t, run.sample_gap, run.sample_mass_left,
                run.sample_mass_right))
    print(f"T_c = {run.T_c_estimate:.6g} s"
          + (" (censored)" if run.censored else ""))
    out = [jpath, spath]
    if _maybe_plot(args):
        from . import plots
        fig = outdir / "couple.png"
        plots.save_couple_figure(fig, run, title="coupled pair")
        out.append(fig)
    return out


def _run_psd(cfg: dict, args) -> list:
    _check_keys(cfg, {"simulator", "input", "segment_T", "params", "out",
                      "seed", "duration", "dt"}, {"input"}, "config")
    trace = read_trace_csv(cfg["input"])
    segment_T = float(cfg.get("segment_T", 1.0))
    spec = psd_bartlett(trace, segment_T)
    outdir = Path(cfg["out"])
    path = outdir / "psd.csv"
    write_spectrum_csv(path, spec.freqs, spec.power)
    out = [path]
    spectra = [spec]
    labels = ["estimate"]
    if "params" in cfg:
        params = _params_from_config(cfg["params"])
        th = renewal_psd(params, spec.freqs[spec.freqs > 0])
        tpath = outdir / "theory_psd.csv"
        write_spectrum_csv(tpath, th.freqs, th.power)
        out.append(tpath)
        spectra.append(th)
        labels.append("renewal theory")
    if _maybe_plot(args):
        from . import plots
        fig = outdir / "psd.png"
        plots.save_spectrum_figure(fig, spectra, labels, title="activity PSD")
        out.append(fig)
    return out


def _run_fig1(cfg: dict, args) -> list:
    """Demo recipe: the bundled exponential-intensity parameter set.

    Emits data for an activity/raster panel, a PSD comparison panel, and
    short/long trace and mass panels for the full, naive, fixed-rate and
    mean-field models.
    """
    _check_keys(cfg, {"simulator", "seed", "out", "psd_duration",
                      "long_duration", "short_duration", "dt",
                      "fixed_lambda", "duration"}, set(), "config")
    seed = int(cfg["seed"])
    dt = float(cfg.get("dt", 1e-3))
    t_psd = float(cfg.get("psd_duration", 60.0))
    t_long = float(cfg.get("long_duration", 100.0))
    t_short = float(cfg.get("short_duration", 1.0))
    lam_fixed = float(cfg.get("fixed_lambda", 277.0))
    params = params_from_dict(_DEMO_PARAMS)
    outdir = Path(cfg["out"])
    plot = _maybe_plot(args)
    out = []

    # panel a: microscopic run vs mean-field prediction
    micro_tr, raster = micro_simulate(params, t_short, dt, seed)
    macro_sol = macro_solve(params, [(0.0, 1.0)], t_short, dt)
    p = outdir / "fig1a_micro.csv"
    write_trace_csv(p, micro_tr)
    out.append(p)
    p = outdir / "fig1a_raster.csv"
    write_raster_csv(p, raster[:, 0], raster[:, 1].astype(int))
    out.append(p)
    p = outdir / "fig1a_macro.csv"
    _write_csv(p, "t,A,mass_residual",
               (macro_sol.times, macro_sol.A, macro_sol.mass_residual))
    out.append(p)

    # panel b: mesoscopic PSD (stationary window) vs renewal theory
    warmup = min(10.0, t_psd / 2)
    meso_tr = meso_simulate(params, LambdaMode("full"), t_psd, dt, seed)
    k0 = int(round(warmup / dt))
    window = ActivityTrace(dt=dt, A=meso_tr.A[k0:], Abar=meso_tr.Abar[k0:],
                           mass=meso_tr.mass[k0:],
                           p_lambda=meso_tr.p_lambda[k0:])
    spec = psd_bartlett(window, 1.0)
    theory = renewal_psd(params, spec.freqs[spec.freqs > 0])
    p = outdir / "fig1b_meso_psd.csv"
    write_spectrum_csv(p, spec.freqs, spec.power)
    out.append(p)
    p = outdir / "fig1b_theory_psd.csv"
    write_spectrum_csv(p, theory.freqs, theory.power)
    out.append(p)

    # panels c-f: full vs naive vs fixed-rate vs mean-field
    runs = {
        "full": meso_simulate(params, LambdaMode("full"), t_long, dt, seed),
        "naive": meso_simulate(params, LambdaMode("naive"), t_long, dt, seed),
        "fixed": meso_simulate(params, LambdaMode.fixed(lam_fixed), t_long,
                               dt, seed),
        "macro": meso_simulate(params, LambdaMode("full"), t_long, dt, seed,
                               mean_field=True),
    }
    for name, tr in runs.items():
        p = outdir / f"fig1cdef_{name}.csv"
        write_trace_csv(p, tr)
        out.append(p)

    if plot:
        from . import plots
        fig = outdir / "fig1a.png"
        plots.save_raster_figure(fig, raster, params.N, t_range=(0, t_short))
        out.append(fig)
        fig = outdir / "fig1a_activity.png"
        macro_as_trace = ActivityTrace(
            dt=dt, A=macro_sol.A, Abar=macro_sol.A,
            mass=1.0 + macro_sol.mass_residual,
            p_lambda=np.zeros_like(macro_sol.A))
        plots.save_trace_figure(fig, [micro_tr, macro_as_trace],
                                ["micro", "mean-field"],
                                t_range=(0, t_short), mass_panel=False)
        out.append(fig)
        fig = outdir / "fig1b.png"
        plots.save_spectrum_figure(fig, [spec, theory],
                                   ["meso (sim)", "renewal theory"],
                                   title="activity PSD")
        out.append(fig)
        labels = list(runs)
        fig = outdir / "fig1cd.png"
        plots.save_expected_rate_figure(
            fig, [runs[k] for k in labels], labels, t_range=(0, t_short))
        out.append(fig)
        fig = outdir / "fig1cd_mass.png"
        plots.save_mass_figure(
            fig, [(runs[k].times, runs[k].mass) for k in labels], labels,
            t_range=(0, t_short))
        out.append(fig)
        fig = outdir / "fig1ef.png"
        plots.save_expected_rate_figure(
            fig, [runs[k] for k in labels], labels, t_range=(0, t_long))
        out.append(fig)
        fig = outdir / "fig1ef_mass.png"
        plots.save_mass_figure(
            fig, [(runs[k].times, runs[k].mass) for k in labels], labels,
            t_range=(0, t_long))
        out.append(fig)
    return out


_DEFAULTS = {
    "meso": {"simulator": "meso", "params": _DEMO_PARAMS, "duration": 10.0,
             "dt": 1e-3, "seed": 1, "out": "runs/meso",
             "lambda_mode": {"kind": "full"}},
    "multi": {"simulator": "multi",
              "pops": [_DEMO_PARAMS, _DEMO_PARAMS],
              "J_matrix": [[0.0, 0.0], [0.0, 0.0]],
              "duration": 10.0, "dt": 1e-3, "seed": 1, "out": "runs/multi"},
    "micro": {"simulator": "micro", "params": _DEMO_PARAMS, "duration": 10.0,
              "dt": 1e-3, "seed": 1, "out": "runs/micro"},
    "macro": {"simulator": "macro", "params": _DEMO_PARAMS,
              "nu0": [[0.0, 1.0]], "duration": 1.0, "dt": 1e-4,
              "seed": 1, "out": "runs/macro"},
    "pdmp": {"simulator": "pdmp",
             "params": {"N": 100, "tau_m": 0.02, "mu": 20.0, "J": 0.0,
                        "f": _DEMO_SIGMOID},
             "nu0": [[0.0, 1.0]], "Lambda": 40.0, "duration": 10.0,
             "dt": 1e-3, "seed": 1, "out": "runs/pdmp"},
    "couple": {"simulator": "couple",
               "params": {"N": 10, "tau_m": 0.02, "mu": 20.0, "J": 0.0,
                          "f": {"kind": "sigmoid", "f_min": 1.0,
                                "f_max": 20.0, "theta": 10.0, "slope": 1.0}},
               "nu0": [[0.0, 1.0]], "nu0_tilde": [[5.0, 0.5]],
               "Lambda": 15.0, "duration": 200.0, "dt": 1e-3, "seed": 1,
               "out": "runs/couple"},
    "psd": {"simulator": "psd", "input": None, "segment_T": 1.0,
            "seed": 1, "out": "runs/psd", "duration": 0.0, "dt": 1e-3},
    "fig1": {"simulator": "fig1", "seed": 1, "out": "runs/fig1", "dt": 1e-3},
}

_RUNNERS = {
    "meso": _run_meso,
    "multi": _run_multi,
    "micro": _run_micro,
    "macro": _run_macro,
    "pdmp": _run_pdmp,
    "couple": _run_couple,
    "psd": _run_psd,
    "fig1": _run_fig1,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mesopop",
        description="Finite-size spiking population simulators and analysis",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("meso", "multi", "micro", "macro", "pdmp", "couple", "psd",
                 "fig1"):
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", type=str, default=None,
                       help="JSON config (or a manifest from a previous run)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", type=str, default=None)
        p.add_argument("--duration", type=float, default=None)
        p.add_argument("--dt", type=float, default=None)
        p.add_argument("--no-plot", action="store_true",
                       help="skip PNG rendering")
        if name in ("meso", "micro", "pdmp"):
            p.add_argument("--sweep", type=int, default=None, metavar="N",
                           help="run N consecutive seeds")
        if name == "psd":
            p.add_argument("--input", type=str, default=None,
                           help="trace CSV to analyze")
            p.add_argument("--segment", type=float, default=None,
                           help="segment length in seconds")
    st = sub.add_parser("selftest", help="run the reduced-scale invariant suite")
    st.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "selftest":
        from .selftest import run_selftest
        failures = run_selftest(verbose=not args.quiet)
        return 0 if failures == 0 else 1

    try:
        cfg = load_config(args.config) if args.config else {}
        if "simulator" in cfg and cfg["simulator"] != args.command:
            raise ConfigError(
                f"config is for simulator {cfg['simulator']!r}, "
                f"but the {args.command!r} subcommand was invoked"
            )
        cfg = _resolve(cfg, args, _DEFAULTS[args.command])
        cfg["simulator"] = args.command
        if args.command == "psd":
            if getattr(args, "input", None):
                cfg["input"] = args.input
            if getattr(args, "segment", None):
                cfg["segment_T"] = args.segment
            if not cfg.get("input"):
                raise ConfigError("psd: an input trace CSV is required")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3

    t0 = time.time()
    try:
        outputs = _RUNNERS[args.command](cfg, args)
        _finish(Path(cfg["out"]), cfg, cfg.get("seed"), t0, outputs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (NumericsError, NonConvergence, FloatingPointError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
