"""Command-line front end.

    cascade-adrc simulate  --config FILE --out DIR
    cascade-adrc grid      --config FILE --out DIR [--parallel N]
    cascade-adrc stability --config FILE --out DIR [--parallel N]
    cascade-adrc telescope --config FILE --out DIR

Exit status: 0 success, 2 configuration error, 3 numeric abort.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

from . import output
from .config import ConfigError, LoadedConfig, load
from .sim.scenario import NumericAbort, cell_certificate, run_grid, run_scenario
from .sim.telescope import run_telescope
from .stability import certify, feasible_sets, log_grid

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
COMMANDS = ("simulate", "grid", "stability", "telescope")


@dataclass
class RunManifest:
    command: str
    config_path: str
    output_dir: str
    seed: int = 0


def _apply_overrides(loaded: LoadedConfig, args) -> None:
    changes = {}
    if args.step is not None:
        changes["step"] = args.step
    if args.duration is not None:
        changes["duration"] = args.duration
    if changes:
        try:
            loaded.scenario = loaded.scenario.replace(**changes)
        except ValueError as exc:
            raise ConfigError("simulation", str(exc)) from None


def _prepare_out(path: str) -> None:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise ConfigError("--out", f"cannot create {path}: {exc.strerror}") from None
    if not os.access(path, os.W_OK):
        raise ConfigError("--out", f"{path} is not writable")


def cmd_simulate(loaded: LoadedConfig, out: str, args) -> int:
    cfg = loaded.scenario
    report = cell_certificate(cfg)
    res = run_scenario(cfg, args.backend)
    summary = res.summary()
    summary["stability"] = None if report is None else report.to_dict()
    output.write_atomic(os.path.join(out, "timeseries.csv"), output.timeseries_csv(res))
    output.write_json(os.path.join(out, "summary.json"), summary)
    return EXIT_OK


def cmd_grid(loaded: LoadedConfig, out: str, args) -> int:
    g = loaded.grid
    if g is None:
        raise ConfigError("grid", "the grid command needs a 'grid' section")
    base = loaded.scenario
    rejection = g.get("rejection", [True, False])
    for i, T in enumerate(g["T"]):
        try:
            base.cell(T=T)
        except ValueError as exc:
            raise ConfigError(f"grid.T[{i}]", str(exc)) from None
    cells = run_grid(base, g["T"], g["omega"], rejection, parallel=args.parallel, backend=args.backend)
    output.write_atomic(os.path.join(out, "grid_summary.csv"), output.grid_csv(cells))
    failed = [c for c in cells if c.error]
    for c in failed:
        print(f"cell T={c.T:g} omega={c.omega:g} rejection={c.rejection}: {c.error}", file=sys.stderr)
    return EXIT_NUMERIC if any(c.error.startswith("NumericAbort") for c in failed) else EXIT_OK


def _grid_from(spec, default):
    if not spec:
        return default
    return log_grid(spec.get("min", 1e-3), spec.get("max", 1e3), spec.get("points", 200))


def cmd_stability(loaded: LoadedConfig, out: str, args) -> int:
    cfg = loaded.scenario
    if cfg.scaled is None or cfg.omega is None or cfg.kappa is None:
        raise ConfigError("gains", "stability analysis needs omega, kappa and gains in scaled form")
    if cfg.current_loop is not None:
        raise ConfigError("input_model", "the certificate covers the first-order input lag only")
    bounds = cfg.stability.bounds or cfg.model.disturbance_bounds()
    if bounds is None:
        raise ConfigError("stability.bounds", "disturbance bounds are required for custom components")
    m = cfg.model
    st = cfg.stability
    try:
        rep = certify(cfg.scaled, m.B, m.T, cfg.omega, cfg.kappa, bounds, cfg.trajectory, st.Qc, st.Qo)
        fs = feasible_sets(cfg.scaled, m.B, m.T, bounds, cfg.trajectory, cfg.kappa,
                           omega_grid=_grid_from(loaded.omega_grid, None), omega=cfg.omega,
                           kappa_grid=_grid_from(loaded.kappa_grid, None), Qc=st.Qc, Qo=st.Qo,
                           parallel=args.parallel)
    except ValueError as exc:
        raise ConfigError("stability", str(exc)) from None
    rep.omega_feasible, rep.kappa_feasible = fs.omega_feasible, fs.kappa_feasible
    doc = rep.to_dict()
    doc["disturbance_bounds"] = bounds.as_dict()
    doc["trajectory_bounds"] = list(cfg.trajectory.bounds)
    output.write_json(os.path.join(out, "stability_report.json"), doc)
    output.write_atomic(os.path.join(out, "omega_sweep.csv"), output.sweep_csv(fs.omega_sweep))
    output.write_atomic(os.path.join(out, "kappa_sweep.csv"), output.sweep_csv(fs.kappa_sweep))
    return EXIT_OK


def cmd_telescope(loaded: LoadedConfig, out: str, args) -> int:
    cfg = loaded.scenario
    if cfg.current_loop is None or cfg.model.n != 2:
        raise ConfigError("input_model", "the telescope command needs a two-axis plant with a current loop")
    variants = (loaded.telescope or {}).get("variants", ["none", "reference_based"])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        runs = run_telescope(cfg, variants, args.backend)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    rows = []
    for r in runs:
        res = r.result
        rows.append([r.label, *res.ISE_axes, *res.ISC_axes, *res.saturation_fraction, res.windup_warning])
        output.write_atomic(os.path.join(out, f"timeseries_{r.label}.csv"), output.timeseries_csv(res))
    header = ["variant", "ISE[0]", "ISE[1]", "ISC[0]", "ISC[1]", "saturation[0]", "saturation[1]",
              "windup_warning"]
    output.write_atomic(os.path.join(out, "telescope_summary.csv"), output.csv_text(header, rows))
    output.write_json(os.path.join(out, "summary.json"),
                      {"variants": {r.label: r.result.summary() for r in runs}})
    return EXIT_OK


HANDLERS = {"simulate": cmd_simulate, "grid": cmd_grid, "stability": cmd_stability,
            "telescope": cmd_telescope}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cascade-adrc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--out", required=True, metavar="DIR")
        p.add_argument("--step", type=float, default=None)
        p.add_argument("--duration", type=float, default=None)
        p.add_argument("--parallel", type=int, default=1, metavar="N")
        p.add_argument("--backend", choices=("compiled", "python", "generic"), default=None)
        p.add_argument("--seed", type=int, default=None, help="reserved; all scenarios are deterministic")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.parallel < 1:
            raise ConfigError("--parallel", "must be at least 1")
        loaded = load(args.config)
        _apply_overrides(loaded, args)
        _prepare_out(args.out)
        manifest = RunManifest(args.command, os.path.abspath(args.config), os.path.abspath(args.out),
                               args.seed if args.seed is not None else loaded.seed)
        code = HANDLERS[args.command](loaded, args.out, args)
        output.write_json(os.path.join(args.out, "manifest.json"), asdict(manifest))
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericAbort as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
