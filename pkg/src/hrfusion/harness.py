"""Reproducible Monte Carlo runner: MSE-vs-SNR tables, averaged spectra and iteration traces.

Every trial draws its bands from ``SeedSequence(master_seed, spawn_key=(trial, band))``,
so the data of a trial depends only on the seed and the trial index. The SNR
only rescales the same draws (common random numbers across the sweep), and the
results do not depend on how trials are distributed over worker processes.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .array_core import ArrayGeometry, evd_split
from .crb import crb_inputs, crb_targets
from .errors import ConfigError, HRFError, LengthMismatch
from .estimators import fml_estimate, fused_subspace_estimate, naive_music
from .estimators.music import average_covariance, music_spectrum
from .scene import BandData, make_scenario, synthesize_band
from .search import GridSpec

log = logging.getLogger(__name__)

ALGORITHMS = ("fml", "fml-prior", "fused", "naive")
ITERATIVE = ("fml", "fml-prior", "fused")
RESULTS_HEADER = ("algorithm", "snr_db", "mse_rad2", "crb_rad2", "trials_used", "failures")


@dataclass(frozen=True)
class ExperimentSpec:
    """Resolved configuration of one experiment. Angles in degrees, as at the CLI."""

    scenario: int = 1
    num_users: int = 2
    num_antennas: int = 5
    num_targets: int = 1
    target_angles_deg: tuple | None = None
    snr_grid_db: tuple = (10.0,)
    trials: int = 200
    algorithms: tuple = ALGORITHMS
    include_crb: bool = False
    master_seed: int = 0
    output_dir: str | None = None
    grid_step_deg: float = 0.5
    eps: float = 1e-6
    max_iters: int = 30
    naive_include_dl: bool = True
    noise_power: float = 1.0
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if not self.snr_grid_db:
            raise ConfigError("the SNR grid is empty")
        if not self.algorithms:
            raise ConfigError("no algorithm selected")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ConfigError(f"unknown algorithms {sorted(unknown)}; choose from {ALGORITHMS}")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master seed must be a 64-bit unsigned integer")
        if self.grid_step_deg <= 0 or self.eps <= 0 or self.max_iters < 1 or self.workers < 1:
            raise ConfigError("grid step, eps, max_iters and workers must be positive")
        object.__setattr__(self, "snr_grid_db", tuple(float(s) for s in self.snr_grid_db))
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        if self.target_angles_deg is not None:
            object.__setattr__(self, "target_angles_deg", tuple(float(t) for t in self.target_angles_deg))
        # Builds the scene once so invalid geometry fails fast.
        self.scenario_at(self.snr_grid_db[0])

    @property
    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(self.num_antennas)

    @property
    def grid(self) -> GridSpec:
        return GridSpec.from_degrees(step=self.grid_step_deg)

    @property
    def naive_signal_dim(self) -> int:
        """``q + K`` distinct angles, capped at ``N - 1`` so a noise subspace remains."""
        return min(self.num_targets + self.num_users, self.num_antennas - 1)

    def scenario_at(self, snr_db: float):
        return make_scenario(
            self.scenario, self.num_users, self.num_antennas, self.num_targets, snr_db,
            target_angles_deg=self.target_angles_deg, noise_power=self.noise_power,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["snr_grid_db"] = list(self.snr_grid_db)
        d["algorithms"] = list(self.algorithms)
        if self.target_angles_deg is not None:
            d["target_angles_deg"] = list(self.target_angles_deg)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown configuration keys {sorted(extra)}")
        return cls(**d)


def mse(estimates: Sequence[Sequence[float]], truth: Sequence[float]) -> float:
    """``(1/(qE)) sum_e sum_p (est_p(e) - truth_p)^2`` with both sides sorted ascending. Radians.

    Raises:
        LengthMismatch: an estimate does not have ``len(truth)`` entries.
    """
    truth = np.sort(np.asarray(truth, dtype=float))
    rows = []
    for e in estimates:
        e = np.sort(np.asarray(e, dtype=float))
        if e.shape != truth.shape:
            raise LengthMismatch(f"estimate has {e.size} angles, truth has {truth.size}")
        rows.append(e)
    if not rows:
        raise LengthMismatch("no estimates given")
    return float(np.mean((np.array(rows) - truth) ** 2))


@dataclass(frozen=True)
class MseRow:
    algorithm: str
    snr_db: float
    mse_rad2: float
    crb_rad2: float
    trials_used: int
    failures: int

    def __post_init__(self):
        if self.mse_rad2 < 0 or self.trials_used < 0 or self.failures < 0:
            raise ValueError(f"inconsistent row {self}")


@dataclass
class MseTable:
    rows: list = field(default_factory=list)

    def get(self, algorithm: str, snr_db: float) -> MseRow:
        for row in self.rows:
            if row.algorithm == algorithm and row.snr_db == snr_db:
                return row
        raise KeyError((algorithm, snr_db))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RESULTS_HEADER)
            for r in self.rows:
                w.writerow([r.algorithm, repr(r.snr_db), repr(r.mse_rad2), repr(r.crb_rad2),
                            r.trials_used, r.failures])

    @classmethod
    def read_csv(cls, path) -> "MseTable":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != RESULTS_HEADER:
                raise ValueError(f"unexpected header {reader.fieldnames}")
            rows = [
                MseRow(r["algorithm"], float(r["snr_db"]), float(r["mse_rad2"]), float(r["crb_rad2"]),
                       int(r["trials_used"]), int(r["failures"]))
                for r in reader
            ]
        return cls(rows)


def trial_rng(master_seed: int, trial: int, band: int) -> np.random.Generator:
    """Counter-based stream for one (trial, band) pair."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(trial, band)))


def synthesize_trial(spec: ExperimentSpec, snr_db: float, trial: int, seed: int | None = None):
    scene, bands = spec.scenario_at(snr_db)
    seed = spec.master_seed if seed is None else seed
    geometry = spec.geometry
    data = [synthesize_band(scene, b, geometry, trial_rng(seed, trial, b.band_index)) for b in bands]
    return scene, data


def run_algorithm(name: str, spec: ExperimentSpec, scene, covariances, **kwargs):
    geometry, grid = spec.geometry, spec.grid
    q = spec.num_targets
    if name == "fml":
        return fml_estimate(covariances, q, geometry, grid, scene.visibility, spec.eps, spec.max_iters)
    if name == "fml-prior":
        return fml_estimate(covariances, q, geometry, grid, scene.visibility, spec.eps, spec.max_iters,
                            user_prior=scene.user_angles)
    if name == "fused":
        return fused_subspace_estimate(covariances, q, geometry, grid, scene.visibility, spec.eps,
                                       spec.max_iters, **kwargs)
    if name == "naive":
        return naive_music(covariances, spec.naive_signal_dim, q, geometry, grid, spec.naive_include_dl)
    raise ConfigError(f"unknown algorithm {name!r}")


@dataclass(frozen=True)
class TrialRecord:
    """Per-trial outcome: squared error per algorithm (``nan`` on failure) and the CRB."""

    trial: int
    sq_errors: dict
    non_converged: tuple
    failed: tuple
    crb: float


def _run_trial(args) -> TrialRecord:
    spec, snr_db, trial = args
    scene, data = synthesize_trial(spec, snr_db, trial)
    covs = [b.covariance for b in data]
    truth = scene.target_angles
    errors, nonconv, failed = {}, [], []
    for name in spec.algorithms:
        try:
            res = run_algorithm(name, spec, scene, covs)
        except (HRFError, np.linalg.LinAlgError) as exc:
            log.warning("trial %d, %s at %g dB failed: %s", trial, name, snr_db, exc)
            errors[name] = math.nan
            failed.append(name)
            continue
        errors[name] = mse([res.target_angles], truth)
        if not res.converged:
            nonconv.append(name)
    crb = math.nan
    if spec.include_crb:
        crb = _trial_crb(scene, data, spec.geometry)
    return TrialRecord(trial, errors, tuple(nonconv), tuple(failed), crb)


def _trial_crb(scene, data: list[BandData], geometry) -> float:
    try:
        return float(np.mean(crb_targets(crb_inputs(scene, data, geometry)).per_target_variance))
    except (HRFError, np.linalg.LinAlgError) as exc:
        log.warning("CRB unavailable: %s", exc)
        return math.nan


def _map(fn: Callable, tasks: list, workers: int) -> list:
    """Ordered map; results come back in task order whatever the worker count."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def aggregate(spec: ExperimentSpec, snr_db: float, records: Sequence[TrialRecord]) -> list[MseRow]:
    records = sorted(records, key=lambda r: r.trial)
    crbs = np.array([r.crb for r in records])
    crb = float(np.mean(crbs[np.isfinite(crbs)])) if np.isfinite(crbs).any() else math.nan
    rows = []
    for name in spec.algorithms:
        errs = np.array([r.sq_errors[name] for r in records])
        used = np.isfinite(errs)
        failures = int(sum(name in r.failed or name in r.non_converged for r in records))
        value = float(np.mean(errs[used])) if used.any() else math.nan
        rows.append(MseRow(name, snr_db, value, crb, int(used.sum()), failures))
    return rows


def run_experiment(spec: ExperimentSpec) -> MseTable:
    """Sweep the SNR grid, run every selected algorithm on identical data per trial and tabulate MSE.

    Numerically failed trials are dropped for that algorithm and counted in
    ``failures``; non-converged runs keep their returned angles and are also
    counted. With ``output_dir`` set, ``results.csv`` and ``spec.json`` are
    written there.
    """
    table = MseTable()
    for snr in spec.snr_grid_db:
        tasks = [(spec, snr, t) for t in range(spec.trials)]
        records = _map(_run_trial, tasks, spec.workers)
        table.rows.extend(aggregate(spec, snr, records))
        log.info("SNR %g dB done", snr)
    if spec.output_dir:
        write_outputs(spec, table)
    return table


def write_outputs(spec: ExperimentSpec, table: MseTable) -> None:
    os.makedirs(spec.output_dir, exist_ok=True)
    table.write_csv(os.path.join(spec.output_dir, "results.csv"))
    scene, bands = spec.scenario_at(spec.snr_grid_db[0])
    echo = {
        "experiment": spec.to_dict(),
        "scene": {k: v for k, v in scene.to_dict().items() if k != "snr_db"},
        "bands": [b.to_dict() for b in bands],
        "naive_signal_dim": spec.naive_signal_dim,
    }
    with open(os.path.join(spec.output_dir, "spec.json"), "w") as fh:
        json.dump(echo, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass
class SpectraDump:
    """Trial-averaged pseudo-spectra in linear scale on a common grid (radians)."""

    thetas: np.ndarray
    music: np.ndarray
    h: np.ndarray
    g: np.ndarray
    user_angles: np.ndarray
    trials: int

    @staticmethod
    def db(values: np.ndarray) -> np.ndarray:
        return 10 * np.log10(values)


def _spectra_trial(args):
    spec, snr_db, trial, seed = args
    scene, data = synthesize_trial(spec, snr_db, trial, seed)
    covs = [b.covariance for b in data]
    try:
        res = run_algorithm("fused", spec, scene, covs, keep_spectra=True)
    except (HRFError, np.linalg.LinAlgError) as exc:
        log.warning("spectra trial %d failed: %s", trial, exc)
        return None
    last = res.spectra[-1]
    g = np.array([s.values for s in last.user_spectra]).reshape(len(last.user_spectra), -1)
    r = average_covariance(covs, spec.naive_include_dl)
    m = music_spectrum(evd_split(r, spec.naive_signal_dim).noise_basis, spec.geometry, spec.grid)
    return last.target_spectrum.values, g, m.values


def dump_spectra(spec: ExperimentSpec, snr_db: float, seed: int | None = None,
                 trials: int | None = None, out_dir: str | None = None) -> SpectraDump:
    """Average ``h^-1`` and ``g_k^-1`` at the final fused iteration, and naive MUSIC, over trials.

    Writes ``music_spectrum.csv``, ``h_spectrum.csv`` and ``g_spectrum_<k>.csv``
    (``theta_deg,value_db``, with ``value_db = 10 log10`` of the averaged raw
    pseudo-spectrum) to ``out_dir`` (default: ``spec.output_dir``).
    """
    seed = spec.master_seed if seed is None else seed
    trials = spec.trials if trials is None else trials
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    outs = _map(_spectra_trial, [(spec, snr_db, t, seed) for t in range(trials)], spec.workers)
    outs = [o for o in outs if o is not None]
    if not outs:
        raise HRFError("every spectra trial failed")
    h = np.mean([o[0] for o in outs], axis=0)
    g = np.mean([o[1] for o in outs], axis=0)
    music = np.mean([o[2] for o in outs], axis=0)
    scene, _ = spec.scenario_at(snr_db)
    dump = SpectraDump(spec.grid.points, music, h, g, np.array(scene.user_angles), trials)
    out_dir = out_dir or spec.output_dir
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        _write_spectrum(os.path.join(out_dir, "music_spectrum.csv"), dump.thetas, music)
        _write_spectrum(os.path.join(out_dir, "h_spectrum.csv"), dump.thetas, h)
        for k, gk in enumerate(g, start=1):
            _write_spectrum(os.path.join(out_dir, f"g_spectrum_{k}.csv"), dump.thetas, gk)
    dump.trials = len(outs)
    return dump


def _write_spectrum(path, thetas, values) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("theta_deg", "value_db"))
        for t, v in zip(np.rad2deg(thetas), SpectraDump.db(values)):
            w.writerow((repr(float(t)), repr(float(v))))


def read_spectrum(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1]


def _trace_trial(args):
    spec, snr_db, trial, seed, algos = args
    scene, data = synthesize_trial(spec, snr_db, trial, seed)
    covs = [b.covariance for b in data]
    out = {}
    for name in algos:
        try:
            res = run_algorithm(name, spec, scene, covs)
        except (HRFError, np.linalg.LinAlgError) as exc:
            log.warning("trace trial %d, %s failed: %s", trial, name, exc)
            continue
        out[name] = (np.array(res.target_history), np.array(res.user_history))
    return out


@dataclass
class IterationTrace:
    """Per algorithm: trial-averaged target and user estimates (degrees) per iteration."""

    targets: dict
    users: dict


def _pad(history: np.ndarray, length: int) -> np.ndarray:
    """Repeat the final iterate so converged runs keep contributing their fixed point."""
    if len(history) >= length:
        return history[:length]
    return np.concatenate([history, np.repeat(history[-1:], length - len(history), axis=0)])


def dump_iteration_trace(spec: ExperimentSpec, snr_db: float, seed: int | None = None,
                         trials: int | None = None, out_dir: str | None = None) -> IterationTrace:
    """Trial-averaged target estimate after every iteration of the iterative algorithms.

    Runs that converge early are held at their final estimate up to
    ``max_iters``. Writes ``iteration_trace.csv`` with columns
    ``algorithm,iteration,angle_index,estimate_deg``. Naive MUSIC is not
    iterative and is skipped.
    """
    seed = spec.master_seed if seed is None else seed
    trials = spec.trials if trials is None else trials
    algos = [a for a in spec.algorithms if a in ITERATIVE]
    outs = _map(_trace_trial, [(spec, snr_db, t, seed, algos) for t in range(trials)], spec.workers)
    targets, users = {}, {}
    for name in algos:
        runs = [o[name] for o in outs if name in o]
        if not runs:
            continue
        targets[name] = np.rad2deg(np.mean([_pad(t, spec.max_iters) for t, _ in runs], axis=0))
        users[name] = np.rad2deg(np.mean([_pad(u, spec.max_iters) for _, u in runs], axis=0))
    trace = IterationTrace(targets, users)
    out_dir = out_dir or spec.output_dir
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "iteration_trace.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("algorithm", "iteration", "angle_index", "estimate_deg"))
            for name, arr in targets.items():
                for p, row in enumerate(arr, start=1):
                    for m, v in enumerate(row):
                        w.writerow((name, p, m, repr(float(v))))
    return trace


def parse_snr_grid(text: str) -> tuple:
    """``"-20:2:10"`` (inclusive start:step:stop), ``"0,10"`` or ``"5"`` to a tuple of floats."""
    text = str(text).strip()
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) != 3 or parts[1] == 0:
                raise ValueError
            start, step, stop = parts
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            if count < 1:
                raise ValueError
            return tuple(round(start + i * step, 10) for i in range(count))
        return tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"cannot parse SNR grid {text!r}; use start:step:stop or a comma list") from None
