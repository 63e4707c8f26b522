"""Monte Carlo campaigns, RMSE curves and file outputs."""
from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import __version__
from ..beamform import beam_pattern, sample_prior
from ..channel import build_ap_ris_link
from ..errors import AlgorithmError, EstimationError, InvalidInputError, RisLocateError
from ..geometry import cartesian_to_polar
from ..localize import derive_seed, run_localization
from .config import CampaignConfig

log = logging.getLogger(__name__)

FMT = "%.10g"
RMSE_HEADER = ["iteration", "rmse", "N"]
PSEUDO_HEADER = ["angle", "value", "iteration", "subarea", "N", "run"]
PATTERN_HEADER = ["angle", "gain", "iteration", "subarea", "N", "run"]
RAW_HEADER = ["N", "run", "iteration", "theta_hat", "d_hat", "x_hat", "y_hat", "z_hat",
              "error", "true_theta", "true_d", "converged", "status"]


@dataclass
class RmseCurve:
    iterations: list
    rmse: list
    N: int = 0
    runs: int = 0


@dataclass
class RunResult:
    """Per-run outcome; ``rows`` are ready-made CSV records per output file."""

    N: int
    run: int
    errors: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    final_doa_error: float = float("nan")
    status: str = "ok"
    raw: list = field(default_factory=list)
    pseudo: list = field(default_factory=list)
    pattern: list = field(default_factory=list)


def _f(x) -> str:
    return FMT % x if isinstance(x, (float, np.floating)) else str(x)


def compute_rmse(errors, N: int = 0) -> RmseCurve:
    """RMSE per iteration over runs of unequal length.

    Each entry of ``errors`` is one run: a sequence of per-iteration errors,
    either distances or error vectors. A run that stopped early repeats its
    last value for the remaining iterations.
    """
    runs = [list(r) for r in errors]
    if not runs or any(len(r) == 0 for r in runs):
        raise InvalidInputError("compute_rmse needs at least one non-empty run")
    n_max = max(len(r) for r in runs)
    sq = np.empty((len(runs), n_max))
    for i, r in enumerate(runs):
        e = np.array([float(np.sum(np.abs(np.asarray(x, dtype=float)) ** 2)) for x in r])
        sq[i, :len(e)] = e
        sq[i, len(e):] = e[-1]
    return RmseCurve(list(range(1, n_max + 1)), np.sqrt(sq.mean(axis=0)).tolist(), N,
                     len(runs))


def run_one(cfg: CampaignConfig, N: int, run: int) -> RunResult:
    """One localization with its UE drawn from the prior.

    Seeds depend on (master seed, run) only, so every RIS size sees the
    same UE, prior samples and noise realizations.
    """
    sc = cfg.scenario(N)
    prior = cfg.prior()
    res = RunResult(N, run)
    ue = sample_prior(prior, 1, seed=derive_seed(cfg.seed, run, 0), ris_center=sc.ris_center)[0]
    true = cartesian_to_polar(ue, sc.ris_center)
    try:
        est = run_localization(sc, prior, ue, cfg.localization(), seed=derive_seed(cfg.seed, run, 1))
    except (AlgorithmError, EstimationError) as e:
        res.status = f"failed: {e}"
        res.raw.append([N, run, 0, "", "", "", "", "", "", _f(true.azimuth), _f(true.range),
                        False, "failed"])
        return res
    ue_xyz = ue.as_array()
    for rec in est.history:
        err = rec.p_hat.as_array() - ue_xyz
        res.errors.append(err)
        res.raw.append([N, run, rec.iteration, _f(rec.best_theta), _f(rec.d_hat),
                        _f(rec.p_hat.x), _f(rec.p_hat.y), _f(rec.p_hat.z),
                        _f(float(np.linalg.norm(err))), _f(true.azimuth), _f(true.range),
                        est.converged, "ok"])
        if cfg.emit_pseudospectrum:
            for l, o in enumerate(rec.outcomes):
                if o.spectrum is None:
                    continue
                for a, v in zip(o.spectrum.grid, o.spectrum.values):
                    res.pseudo.append([_f(float(a)), _f(float(v)), rec.iteration, l, N, run])
        if cfg.emit_beampattern:
            G = build_ap_ris_link(sc)
            grid = np.arange(0.0, 360.0, cfg.pattern_step)
            for l, o in enumerate(rec.outcomes):
                if o.config is None:
                    continue
                for a, g in beam_pattern(o.config, G, sc, grid, rec.area.elevation):
                    res.pattern.append([_f(a), _f(g), rec.iteration, l, N, run])
    res.iterations = est.iterations
    res.converged = est.converged
    res.final_doa_error = abs(float((est.theta_hat - true.azimuth + 180) % 360 - 180))
    return res


def _task(args):
    cfg, N, run = args
    try:
        return run_one(cfg, N, run)
    except RisLocateError as e:
        return RunResult(N, run, status=f"failed: {e}")


def run_runs(cfg: CampaignConfig) -> list[RunResult]:
    """All (N, run) pairs in a fixed order, optionally across worker processes."""
    tasks = [(cfg, N, r) for N in cfg.N_list for r in range(cfg.runs)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            return list(ex.map(_task, tasks, chunksize=1))
    out = []
    for t in tasks:
        out.append(_task(t))
        log.debug("N=%d run=%d %s", t[1], t[2], out[-1].status)
    return out


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def run_campaign(cfg: CampaignConfig, results: list[RunResult] | None = None) -> dict:
    """Run (or reuse ``results``) and write the enabled outputs.

    Returns ``{"files": [...], "curves": {N: RmseCurve}, "failures": {N: count}}``.
    Raises AlgorithmError when more than half the runs of any N fail.
    """
    results = run_runs(cfg) if results is None else results
    os.makedirs(cfg.output_dir, exist_ok=True)
    curves, failures = {}, {}
    for N in cfg.N_list:
        mine = [r for r in results if r.N == N]
        ok = [r for r in mine if r.status == "ok"]
        failures[N] = len(mine) - len(ok)
        if failures[N] * 2 > len(mine):
            raise AlgorithmError(f"N={N}: {failures[N]} of {len(mine)} runs failed")
        curves[N] = compute_rmse([r.errors for r in ok], N)
    files = []

    def emit(name, header, rows):
        path = os.path.join(cfg.output_dir, name)
        _write_csv(path, header, rows)
        files.append(name)

    if cfg.emit_rmse:
        emit("rmse.csv", RMSE_HEADER,
             [[i, _f(v), N] for N, c in curves.items() for i, v in zip(c.iterations, c.rmse)])
    if cfg.emit_raw:
        emit("raw.csv", RAW_HEADER, [row for r in results for row in r.raw])
    if cfg.emit_pseudospectrum:
        emit("pseudospectrum.csv", PSEUDO_HEADER, [row for r in results for row in r.pseudo])
    if cfg.emit_beampattern:
        emit("beampattern.csv", PATTERN_HEADER, [row for r in results for row in r.pattern])
    manifest = {
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.as_dict(),
        "runs": {str(N): {"total": cfg.runs, "failed": failures[N]} for N in cfg.N_list},
        "files": sorted(files),
    }
    with open(os.path.join(cfg.output_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    files.append("manifest.json")
    return {"files": files, "curves": curves, "failures": failures, "results": results}
