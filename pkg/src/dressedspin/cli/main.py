"""``dressedspin`` command line: simulations, fits, device budget and tuning."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import platform
import sys
import warnings

import numpy as np
import scipy
import sklearn

from .. import __version__
from ..analysis import (Curve, fit_damped_sine, fit_decay, fit_linear, fit_multi_sine, fit_peak,
                        fit_peaks)
from ..device import DeviceModel, RABI_SLOPE
from ..experiments import (ExperimentResult, ReadoutModel, dressed_operator, echo_experiment,
                           odar_experiment, rabi_experiment, ramsey_experiment, run_experiment,
                           synchronous_delays)
from ..propagator import EnsembleError, LindbladChannel, NoiseModel, PropagationError
from ..spin import DRESSED_Z, DriveField, OrbitalBranch, SpinSystem, orbital_decoherence_rate
from ..tuning import CavitySpec, SivInstance, solve_pair
from .config import ConfigError, RunConfig, parse_config

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_FIT = 0, 2, 3, 4

log = logging.getLogger("dressedspin")

AUTO_MODEL = {"odar": "peaks", "rabi": "damped-sine", "ramsey": "damped-sine", "echo": "decay"}


class FitFailure(RuntimeError):
    pass


class Run:
    """Collects the files one invocation writes, then the manifest."""

    def __init__(self, args, config: RunConfig):
        self.args = args
        self.config = config
        self.out = args.out
        self.files = []
        os.makedirs(self.out, exist_ok=True)

    @property
    def prefix(self):
        return self.config.get("output", "prefix")

    def write(self, name, text):
        path = os.path.join(self.out, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        self.files.append(path)
        return path

    def manifest(self):
        files = []
        for path in self.files:
            with open(path, "rb") as fh:
                digest = hashlib.sha256(fh.read()).hexdigest()
            files.append({"path": os.path.basename(path), "sha256": digest})
        doc = {
            "command": self.args.command,
            "argv": list(self.args.argv),
            "config_text": self.config.to_text(),
            "config_sha256": self.config.sha256(),
            "seed": self.config.seed,
            "threads": self.args.threads,
            "format": self.args.format,
            "versions": {"dressedspin": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__,
                         "scikit-learn": sklearn.__version__},
            "files": files,
        }
        name = f"{self.prefix}_manifest.json"
        path = os.path.join(self.out, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path


# ---------------------------------------------------------------- builders

def build_system(cfg: RunConfig) -> SpinSystem:
    if not cfg.has("spin"):
        raise ConfigError("missing [spin] section", section="spin")
    omega = cfg.get("spin", "omega")
    orbital = OrbitalBranch(cfg.get("spin", "orbital_splitting"), cfg.get("spin", "orbital_rabi"),
                            cfg.get("spin", "orbital_gamma"))
    omega_D = cfg.get("spin", "dressing_rabi")
    drives = (DriveField(omega_D, omega, role="dressing"),) if omega_D > 0 else ()
    return SpinSystem(omega, drives, orbital)


def build_noise(cfg: RunConfig) -> NoiseModel:
    kind = cfg.get("noise", "kind")
    if kind == "quasi-static":
        return NoiseModel.quasi_static(cfg.get("noise", "sigma"))
    if kind == "ornstein-uhlenbeck":
        return NoiseModel.ornstein_uhlenbeck(cfg.get("noise", "sigma"), cfg.get("noise", "correlation_time"))
    if kind == "white":
        return NoiseModel.white(cfg.get("noise", "dephasing_rate"))
    return NoiseModel()


def build_channels(cfg: RunConfig, system: SpinSystem):
    if system.is_dressed and cfg.get("spin", "orbital_dephasing"):
        rate = orbital_decoherence_rate(system.orbital)
        return (LindbladChannel(dressed_operator(DRESSED_Z), rate),)
    return ()


def build_readout(cfg: RunConfig) -> ReadoutModel:
    return ReadoutModel(init_fidelity=cfg.get("readout", "init_fidelity"),
                        poisson=cfg.get("readout", "poisson"),
                        repetitions=cfg.get("readout", "repetitions"))


def _grid(cfg, kind, system):
    if not cfg.has("experiment"):
        raise ConfigError("missing [experiment] section", section="experiment")
    for key in ("sweep_start", "sweep_stop", "sweep_points"):
        if not cfg.has("experiment", key):
            raise ConfigError(f"missing required key {key!r} in [experiment]", section="experiment", key=key)
    dim = cfg.block("experiment").get("_sweep_dimension")
    want = "frequency" if kind == "odar" else "time"
    if dim != want:
        raise ConfigError(f"{kind} sweeps need {want} units on sweep_start/sweep_stop",
                          section="experiment", key="sweep_start")
    grid = np.linspace(cfg.get("experiment", "sweep_start"), cfg.get("experiment", "sweep_stop"),
                       cfg.get("experiment", "sweep_points"))
    if kind in ("ramsey", "echo") and cfg.get("experiment", "synchronous") and system.is_dressed:
        grid = synchronous_delays(grid, system.dressing.omega_x, 2 if kind == "echo" else 1)
    return grid


def build_experiment(cfg: RunConfig, kind, system=None, threads=1):
    declared = cfg.get("experiment", "type")
    if declared is not None and declared != kind:
        raise ConfigError(f"config declares experiment type {declared!r} but {kind!r} was requested",
                          section="experiment", key="type")
    system = build_system(cfg) if system is None else system
    grid = _grid(cfg, kind, system)
    common = dict(noise=build_noise(cfg), shots=cfg.get("experiment", "shots"),
                  seed=cfg.seed or 0, threads=threads, readout=build_readout(cfg),
                  channels=build_channels(cfg, system), noise_dt=cfg.get("noise", "grid_step"),
                  laser=cfg.get("experiment", "laser"))
    frame = cfg.get("experiment", "frame")
    freq = cfg.get("experiment", "probe_frequency")
    rabi = cfg.get("experiment", "rabi")
    if kind == "odar":
        return odar_experiment(system, grid, omega_x=cfg.get("experiment", "probe_transverse"),
                               lambda_z=cfg.get("experiment", "probe_longitudinal"),
                               pulse=cfg.get("experiment", "pulse"),
                               frame=cfg.get("experiment", "frame") if cfg.has("experiment", "frame") else "lab",
                               **common)
    if kind == "rabi":
        return rabi_experiment(system, grid, rabi=rabi, frequency=freq, frame=frame, **common)
    factory = ramsey_experiment if kind == "ramsey" else echo_experiment
    return factory(system, grid, detuning=cfg.get("experiment", "detuning"), rabi=rabi,
                   frequency=freq, frame=frame, **common)


# ---------------------------------------------------------------- fitting

def fit_curve(curve: Curve, model, cfg: RunConfig):
    if model == "damped-sine":
        return [fit_damped_sine(curve)]
    if model == "multi-sine":
        return [fit_multi_sine(curve, cfg.get("analysis", "n_tones"))]
    if model == "peak":
        return [fit_peak(curve, cfg.get("analysis", "shape"))]
    if model == "peaks":
        return fit_peaks(curve, cfg.get("analysis", "shape"))
    if model == "decay":
        return [fit_decay(curve)]
    if model == "linear":
        return [fit_linear(curve)]
    return []


def _model_for(cfg, kind):
    model = cfg.get("analysis", "model")
    return AUTO_MODEL.get(kind, "none") if model == "auto" else model


def _emit_fits(run: Run, fits, name):
    if not fits:
        return
    text = "\n".join(f.report() for f in fits)
    run.write(f"{name}_fit.txt", text)
    docs = [json.loads(f.to_json()) for f in fits]
    run.write(f"{name}_fit.json", json.dumps(docs if len(docs) > 1 else docs[0], indent=2, sort_keys=True) + "\n")
    print(text, end="")
    if not all(f.converged for f in fits):
        raise FitFailure(f"{sum(not f.converged for f in fits)} fit(s) did not converge")


def _emit_result(run: Run, result: ExperimentResult, name):
    if run.args.format == "json":
        run.write(f"{name}.json", json.dumps(result.to_records(), indent=1) + "\n")
    else:
        run.write(f"{name}.csv", result.to_csv())


def _table_text(rows, columns):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------- commands

def _experiment_command(kind):
    def command(args, cfg):
        run = Run(args, cfg)
        spec = build_experiment(cfg, kind, threads=args.threads)
        result = run_experiment(spec, threads=args.threads)
        _emit_result(run, result, run.prefix)
        fits = fit_curve(result.curve(), _model_for(cfg, kind), cfg)
        try:
            _emit_fits(run, fits, run.prefix)
            if kind == "ramsey" and args.dressed:
                _dressed_comparison(args, cfg, run, fits)
        finally:
            run.manifest()
    return command


def _dressed_comparison(args, cfg, run, dressed_fits):
    system = build_system(cfg)
    if not system.is_dressed:
        raise ConfigError("--dressed needs dressing_rabi > 0 in [spin]", section="spin", key="dressing_rabi")
    bare = SpinSystem(system.omega, (), system.orbital)
    grid = np.linspace(0.0, cfg.get("reference", "sweep_stop"), cfg.get("reference", "sweep_points"))
    spec = ramsey_experiment(bare, grid, detuning=cfg.get("reference", "detuning"),
                             rabi=cfg.get("reference", "rabi"), noise=build_noise(cfg),
                             shots=cfg.get("experiment", "shots"), seed=cfg.seed or 0,
                             threads=args.threads, readout=build_readout(cfg),
                             noise_dt=cfg.get("noise", "grid_step"))
    result = run_experiment(spec, threads=args.threads)
    _emit_result(run, result, f"{run.prefix}_bare")
    bare_fits = fit_curve(result.curve(), "damped-sine", cfg)
    _emit_fits(run, bare_fits, f"{run.prefix}_bare")
    t_d, t_b = dressed_fits[0]["T2star"], bare_fits[0]["T2star"]
    line = f"T2star dressed {t_d:.6g} s, bare {t_b:.6g} s, ratio {t_d / t_b:.4g}\n"
    run.write(f"{run.prefix}_ratio.txt", line)
    print(line, end="")


def cmd_sweep_dressing(args, cfg):
    run = Run(args, cfg)
    values = cfg.get("sweep", "dressing_rabi")
    if values is None:
        raise ConfigError("sweep-dressing needs dressing_rabi_<unit> in [sweep]", section="sweep")
    noise = build_noise(cfg)
    if noise.kind != "quasi-static" or noise.sigma_eta <= 0:
        raise ConfigError("sweep-dressing scales its window from quasi-static sigma; set [noise] kind/sigma",
                          section="noise")
    base = build_system(cfg)
    rows, fits = [], []
    sigma = noise.sigma_eta
    for omega_D in values:
        system = base.with_drives((DriveField(omega_D, base.omega, role="dressing"),))
        # Dressed dephasing time of quasi-static noise, used only to size the window.
        t_d = omega_D / (4 * math.pi * sigma**2)
        window = cfg.get("sweep", "window_factor") * t_d
        grid = synchronous_delays(np.linspace(0, window, cfg.get("sweep", "sweep_points")), omega_D)
        spec = ramsey_experiment(system, grid, detuning=cfg.get("sweep", "fringes") / window,
                                 rabi=cfg.get("experiment", "rabi"), noise=noise,
                                 shots=cfg.get("experiment", "shots"), seed=cfg.seed or 0,
                                 threads=args.threads, readout=build_readout(cfg),
                                 channels=build_channels(cfg, system))
        fit = fit_damped_sine(run_experiment(spec, threads=args.threads).curve())
        fits.append(fit)
        T, dT = fit["T2star"], fit.error("T2star")
        rows.append((float(omega_D), float(T), float(dT), float(1.0 / T)))
    cols = ("dressing_rabi_hz", "t2star_s", "t2star_err_s", "dephasing_rate_hz")
    if args.format == "json":
        run.write(f"{run.prefix}_sweep.json", json.dumps([dict(zip(cols, r)) for r in rows], indent=1) + "\n")
    else:
        run.write(f"{run.prefix}_sweep.csv", _table_text(rows, cols))
    try:
        if len(rows) >= 3:
            scaling = fit_linear(Curve(np.log([r[0] for r in rows]), np.log([r[3] for r in rows])))
            _emit_fits(run, [scaling], f"{run.prefix}_scaling")
            print(f"dephasing rate ~ Omega_D^{scaling['slope']:.3f}")
        if not all(f.converged for f in fits):
            raise FitFailure("a Ramsey fit in the dressing sweep did not converge")
    finally:
        run.manifest()


def cmd_fit(args, cfg):
    run = Run(args, cfg)
    result = ExperimentResult.from_csv(args.input)
    model = args.model or cfg.get("analysis", "model")
    if model in ("auto", "none"):
        raise ConfigError("fit needs --model or [analysis] model", section="analysis", key="model")
    if args.n_tones is not None:
        cfg = RunConfig({**cfg.blocks, "analysis": {**cfg.block("analysis"), "n_tones": args.n_tones}})
    try:
        _emit_fits(run, fit_curve(result.curve(), model, cfg), run.prefix)
    finally:
        run.manifest()


def cmd_device_report(args, cfg):
    run = Run(args, cfg)
    slope = cfg.get("device", "rabi_slope", RABI_SLOPE)
    device = DeviceModel(rabi_slope=slope)
    power = cfg.get("device", "rf_power")
    temp = cfg.get("device", "max_temperature")
    p_mw = None if power is None else power * 1e3
    t_mk = None if temp is None else temp * 1e3
    if p_mw is not None and t_mk is None:
        t_mk = device.thermal.node_temperature(p_mw)
    records = device.report(p_mw, t_mk)
    if args.format == "json":
        text = json.dumps([{"quantity": q, "value": v, "unit": u} for q, v, u in records], indent=1) + "\n"
        run.write(f"{run.prefix}_device.json", text)
    else:
        width = max(len(q) for q, _, _ in records)
        text = "".join(f"{q:<{width}}  {v:>16.9g}  {u}\n" for q, v, u in records)
        run.write(f"{run.prefix}_device.txt", text)
    print(text, end="")
    run.manifest()


def cmd_tune(args, cfg):
    if not cfg.has("tuning"):
        raise ConfigError("tune needs a [tuning] section", section="tuning")
    run = Run(args, cfg)
    g = lambda k: cfg.get("tuning", k)
    sol = solve_pair(SivInstance(g("epsilon_1"), g("eta_1")), SivInstance(g("epsilon_2"), g("eta_2")),
                     CavitySpec(g("omega_a"), g("omega_c")), tol=g("tolerance"))
    records = sol.records()
    if args.format == "json":
        text = json.dumps([{"quantity": q, "value": v, "unit": u} for q, v, u in records], indent=1) + "\n"
        run.write(f"{run.prefix}_tune.json", text)
    else:
        width = max(len(q) for q, _, _ in records)
        text = "".join(f"{q:<{width}}  {v:>20.12g}  {u}\n" for q, v, u in records)
        run.write(f"{run.prefix}_tune.txt", text)
    print(text, end="")
    run.manifest()
    if not sol.converged:
        raise ArithmeticError(f"tuning solver did not converge: {sol.message}")


# ---------------------------------------------------------------- entry

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration")
    common.add_argument("--seed", type=int, help="RNG seed (overrides [run] seed)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--threads", type=int, default=None, help="worker threads for shot ensembles")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dressedspin", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for kind, label in (("odar", "an ODAR"), ("rabi", "a Rabi"), ("echo", "a spin-echo")):
        sub.add_parser(kind, parents=[common], help=f"simulate {label} sweep").set_defaults(
            func=_experiment_command(kind), dressed=False)
    p = sub.add_parser("ramsey", parents=[common], help="simulate a Ramsey sweep")
    p.add_argument("--dressed", action="store_true",
                   help="also run the bare reference from [reference] and report the T2* ratio")
    p.set_defaults(func=_experiment_command("ramsey"))
    sub.add_parser("sweep-dressing", parents=[common], help="dressed T2* against dressing Rabi").set_defaults(
        func=cmd_sweep_dressing)
    p = sub.add_parser("fit", parents=[common], help="fit a result CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--model", choices=("damped-sine", "multi-sine", "peak", "peaks", "decay", "linear"))
    p.add_argument("--n-tones", type=int)
    p.set_defaults(func=cmd_fit)
    sub.add_parser("device-report", parents=[common], help="link budget and duty plan").set_defaults(
        func=cmd_device_report)
    sub.add_parser("tune", parents=[common], help="two-SiV field/amplitude solver").set_defaults(func=cmd_tune)
    return parser


def _error(kind, exc, code):
    record = exc.record() if isinstance(exc, ConfigError) else {"error": kind, "message": str(exc)}
    record["exit_code"] = code
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        text = ""
        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            cfg = parse_config(text, seed=args.seed)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        if args.threads is None:
            args.threads = cfg.get("run", "threads")
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        args.func(args, cfg)
    except (ConfigError, OSError) as exc:
        return _error("config", exc, EXIT_CONFIG)
    except FitFailure as exc:
        return _error("fit", exc, EXIT_FIT)
    except (PropagationError, EnsembleError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _error("numerical", exc, EXIT_NUMERIC)
    except (ValueError, TypeError) as exc:
        return _error("config", exc, EXIT_CONFIG)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
