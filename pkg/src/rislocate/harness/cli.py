"""Command line entry point: ``rislocate {simulate,probe,pattern,selftest}``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

import numpy as np

from ..beamform import beam_pattern
from ..channel import RisConfiguration, Scenario, build_ap_ris_link
from ..errors import ConfigError, InvalidInputError, RisLocateError
from ..geometry import PolarPosition, polar_to_cartesian
from ..localize import derive_seed, run_localization
from .campaign import FMT, PATTERN_HEADER, PSEUDO_HEADER, _write_csv, run_campaign
from .config import parse_config

log = logging.getLogger("rislocate")


def _common(p: argparse.ArgumentParser):
    p.add_argument("-c", "--config", help="YAML file with flat key: value pairs")
    p.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("-o", "--output-dir", help="directory for CSV/JSON outputs")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rislocate",
                                 description="RIS-aided UE localization simulator")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Monte Carlo campaign over the RIS sizes in N_list")
    _common(p)
    p.add_argument("-j", "--workers", type=int, help="worker processes")
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("probe", help="one localization with per-iteration dumps")
    _common(p)
    p.add_argument("--ue-azimuth", type=float, help="UE azimuth in the RIS frame (deg)")
    p.add_argument("--ue-range", type=float, help="UE distance from the RIS (m)")
    p.add_argument("--N", type=int, help="RIS size (default Nx*Ny from the config)")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("pattern", help="beam pattern of a stored RIS configuration")
    p.add_argument("ris_config", help="ris_configs.json written by 'probe'")
    p.add_argument("--iteration", type=int, default=1)
    p.add_argument("--subarea", type=int, default=0)
    p.add_argument("--start", type=float, default=0.0)
    p.add_argument("--stop", type=float, default=360.0)
    p.add_argument("--step", type=float, default=0.5)
    p.add_argument("--output", help="CSV path (stdout if omitted)")

    p = sub.add_parser("selftest", help="fast invariant checks")
    p.add_argument("--seed", type=int, default=0)
    return ap


def _load(args, extra: dict) -> "CampaignConfig":  # noqa: F821
    overrides = list(args.set)
    for key, val in extra.items():
        if val is not None:
            overrides.append(f"{key}={val}")
    if getattr(args, "output_dir", None):
        overrides.append(f"output_dir={args.output_dir}")
    return parse_config(args.config, overrides)


def cmd_simulate(args) -> dict:
    cfg = _load(args, {"workers": args.workers, "runs": args.runs, "seed": args.seed})
    out = run_campaign(cfg)
    return {"output_dir": cfg.output_dir, "files": out["files"],
            "failures": {str(k): v for k, v in out["failures"].items()},
            "final_rmse": {str(N): c.rmse[-1] for N, c in out["curves"].items()}}


def cmd_probe(args) -> dict:
    cfg = _load(args, {"ue_azimuth": args.ue_azimuth, "ue_range": args.ue_range,
                       "seed": args.seed})
    sc = cfg.scenario(args.N)
    ue = polar_to_cartesian(PolarPosition(cfg.ue_azimuth, cfg.prior_elevation, cfg.ue_range),
                            sc.ris_center)
    est = run_localization(sc, cfg.prior(), ue, cfg.localization(),
                           seed=derive_seed(cfg.seed, 0, 1))
    os.makedirs(cfg.output_dir, exist_ok=True)
    G = build_ap_ris_link(sc)
    grid = np.arange(0.0, 360.0, cfg.pattern_step)
    pseudo, pattern, stored, iters = [], [], [], []
    for rec in est.history:
        iters.append({"iteration": rec.iteration, "area": list(rec.area.azimuth),
                      "estimates": rec.estimates, "best": rec.best_theta,
                      "next_area": list(rec.next_area.azimuth), "d_hat": rec.d_hat,
                      "snr_db": [10 * np.log10(s) if s > 0 else None for s in rec.snrs]})
        for l, o in enumerate(rec.outcomes):
            if o.spectrum is not None:
                pseudo += [[FMT % a, FMT % v, rec.iteration, l, sc.N, 0]
                           for a, v in zip(o.spectrum.grid, o.spectrum.values)]
            if o.config is not None:
                pattern += [[FMT % a, FMT % g, rec.iteration, l, sc.N, 0]
                            for a, g in beam_pattern(o.config, G, sc, grid)]
                stored.append({"iteration": rec.iteration, "subarea": l,
                               "azimuth": list(o.area.azimuth),
                               "v_real": o.config.v.real.tolist(),
                               "v_imag": o.config.v.imag.tolist()})
        log.info("iteration %d: best %.4f deg, next area %s", rec.iteration, rec.best_theta,
                 rec.next_area.azimuth)
    _write_csv(os.path.join(cfg.output_dir, "pseudospectrum.csv"), PSEUDO_HEADER, pseudo)
    _write_csv(os.path.join(cfg.output_dir, "beampattern.csv"), PATTERN_HEADER, pattern)
    with open(os.path.join(cfg.output_dir, "ris_configs.json"), "w", encoding="utf-8") as fh:
        json.dump({"scenario": dataclasses.asdict(sc), "configs": stored}, fh, indent=1)
    return {"theta_hat": est.theta_hat, "d_hat": est.d_hat,
            "p_hat": [est.p_hat.x, est.p_hat.y, est.p_hat.z],
            "doa_error": abs(float((est.theta_hat - cfg.ue_azimuth + 180) % 360 - 180)),
            "converged": est.converged, "iterations": iters, "output_dir": cfg.output_dir}


def cmd_pattern(args) -> dict | None:
    try:
        with open(args.ris_config, encoding="utf-8") as fh:
            data = json.load(fh)
        sc = Scenario(**data["scenario"])
        match = [c for c in data["configs"]
                 if c["iteration"] == args.iteration and c["subarea"] == args.subarea]
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise ConfigError("ris_config", f"cannot load {args.ris_config}: {e}") from e
    if not match:
        raise ConfigError("iteration", f"no configuration for iteration {args.iteration}, "
                                       f"subarea {args.subarea}")
    v = RisConfiguration(np.array(match[0]["v_real"]) + 1j * np.array(match[0]["v_imag"]))
    if args.step <= 0 or args.stop <= args.start:
        raise InvalidInputError("need step > 0 and stop > start")
    rows = beam_pattern(v, build_ap_ris_link(sc), sc, np.arange(args.start, args.stop, args.step))
    fh = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        fh.write("angle,gain\n")
        for a, g in rows:
            fh.write(f"{FMT % a},{FMT % g}\n")
    finally:
        if args.output:
            fh.close()
    return {"output": args.output} if args.output else None


def cmd_selftest(args) -> dict:
    from .selftest import run_selftest

    return run_selftest(args.seed)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"simulate": cmd_simulate, "probe": cmd_probe, "pattern": cmd_pattern,
               "selftest": cmd_selftest}[args.command]
    try:
        result = handler(args)
    except RisLocateError as e:
        err = {"error": type(e).__name__, "message": str(e)}
        if isinstance(e, ConfigError):
            err["key"] = e.key
        print(json.dumps(err), file=sys.stderr)
        return 2 if isinstance(e, (ConfigError, InvalidInputError)) else 1
    if result is not None:
        print(json.dumps(result, indent=1, default=float))
    if args.command == "selftest" and not result["passed"]:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
