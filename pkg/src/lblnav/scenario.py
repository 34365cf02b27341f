"""Scenario configuration, Monte Carlo execution and file outputs."""

import json
import logging
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import LblNavError, ParseError, ValidationError
from .filters import FILTERS, AlgebraicKF, AugmentedFilter, ChainTuning, FilterTuning, RangeEKF
from .obsv import noncoplanar_check, signals_from_truth, gramian, window_gramians
from .truthsim import DEFAULT_LANDMARKS, HelixTrajectory, NoiseConfig, simulate

logger = logging.getLogger(__name__)

FLOAT_FMT = "%.17g"
_DEFAULT_NOISE = NoiseConfig()


@dataclass
class Tuning:
    qx: float = 1e-5
    qy_range: float = 1.0
    qy_pair: float = 2.0
    ekf_q: float = 1e-5
    ekf_r: float = 1.0
    algebraic_q: float = 1e-5
    algebraic_r: float = 4.0


@dataclass
class InitialGuess:
    position: tuple = (0.0, 0.0, 0.0)
    velocity: tuple = (0.0, 0.0, 0.0)
    gravity: tuple = (0.0, 0.0, 10.0)


@dataclass
class GramianOptions:
    t0: float = 0.0
    tf: float = 10.0
    window: float = 0.0  # > 0 also reports consecutive windows over the whole run


@dataclass
class ScenarioConfig:
    landmarks: list = field(default_factory=lambda: DEFAULT_LANDMARKS.tolist())
    noise: dict = field(
        default_factory=lambda: {
            "sigma_range": _DEFAULT_NOISE.sigma_range,
            "sigma_accel": _DEFAULT_NOISE.sigma_accel,
            "sigma_gyro": _DEFAULT_NOISE.sigma_gyro,
            "sigma_roll_pitch": _DEFAULT_NOISE.sigma_roll_pitch,
            "sigma_yaw": _DEFAULT_NOISE.sigma_yaw,
        }
    )
    imu_hz: float = 100.0
    range_hz: float = 1.0
    duration: float = 600.0
    trajectory: dict = field(default_factory=lambda: asdict(HelixTrajectory()))
    filters: list = field(default_factory=lambda: ["proposed", "ekf", "algebraic"])
    tuning: Tuning = field(default_factory=Tuning)
    initial: InitialGuess = field(default_factory=InitialGuess)
    monte_carlo_runs: int = 1
    seed: int = 0
    r_min: float = 1.0
    convergence_threshold: float = 0.5
    gramian: GramianOptions = field(default_factory=GramianOptions)

    @property
    def landmark_array(self):
        return np.asarray(self.landmarks, dtype=float)

    @property
    def noise_config(self):
        return NoiseConfig(seed=self.seed, **self.noise)

    @property
    def helix(self):
        params = dict(self.trajectory)
        params["start"] = tuple(params["start"])
        return HelixTrajectory(**params)

    @property
    def n_records(self):
        return int(round(self.duration * self.range_hz))

    def validate(self):
        s = np.asarray(self.landmarks, dtype=float) if self.landmarks else np.zeros((0, 3))
        if s.ndim != 2 or s.shape[1] != 3 or s.shape[0] < 1:
            raise ValidationError("landmarks: expected a non-empty list of [x, y, z] triples")
        if not np.all(np.isfinite(s)):
            raise ValidationError("landmarks: coordinates must be finite")
        for key, value in self.noise.items():
            if not isinstance(value, (int, float)) or not np.isfinite(value) or value < 0:
                raise ValidationError(f"noise.{key}: must be a finite number >= 0, got {value!r}")
        if self.duration <= 0:
            raise ValidationError("duration: must be > 0")
        if self.imu_hz <= 0 or self.range_hz <= 0:
            raise ValidationError("rates: imu_hz and range_hz must be > 0")
        ratio = self.imu_hz / self.range_hz
        if ratio < 1 or abs(ratio - round(ratio)) > 1e-9:
            raise ValidationError("rates: imu_hz must be an integer multiple of range_hz")
        if abs(self.duration * self.range_hz - round(self.duration * self.range_hz)) > 1e-9:
            raise ValidationError("duration: must span a whole number of range epochs")
        if not self.filters:
            raise ValidationError("filters: at least one filter is required")
        for name in self.filters:
            if name not in FILTERS:
                raise ValidationError(f"filters: unknown filter {name!r} (choose from {sorted(FILTERS)})")
        if len(set(self.filters)) != len(self.filters):
            raise ValidationError("filters: duplicate entries")
        if not isinstance(self.monte_carlo_runs, int) or self.monte_carlo_runs < 1:
            raise ValidationError("monte_carlo_runs: must be an integer >= 1")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValidationError("seed: must be a non-negative integer")
        if self.r_min <= 0:
            raise ValidationError("r_min: must be > 0")
        for key, value in asdict(self.tuning).items():
            if not np.isfinite(value) or value < 0 or (key.endswith("_r") or key.startswith("qy")) and value == 0:
                raise ValidationError(f"tuning.{key}: must be finite and positive")
        try:
            self.noise_config
            self.helix
        except (TypeError, ValueError) as exc:
            raise ValidationError(str(exc)) from exc
        if self.gramian.tf < self.gramian.t0 or self.gramian.window < 0:
            raise ValidationError("gramian: need tf >= t0 and window >= 0")
        needs_geometry = {"proposed", "algebraic"} & set(self.filters)
        if needs_geometry and not noncoplanar_check(s):
            raise ValidationError(f"landmarks: {sorted(needs_geometry)} need at least 4 noncoplanar landmarks")
        return self


_NESTED = {"tuning": Tuning, "initial": InitialGuess, "gramian": GramianOptions}


def config_from_dict(data):
    """Build a validated :class:`ScenarioConfig`; missing keys take defaults."""
    if not isinstance(data, dict):
        raise ValidationError("top level: expected a JSON object")
    data = dict(data)
    rates = data.pop("rates", {})
    if not isinstance(rates, dict):
        raise ValidationError("rates: expected an object")
    for key in rates:
        if key not in ("imu_hz", "range_hz"):
            raise ValidationError(f"rates: unknown key {key!r}")
    data.update(rates)
    cfg = ScenarioConfig()
    known = set(cfg.__dataclass_fields__)
    for key, value in data.items():
        if key not in known:
            raise ValidationError(f"unknown configuration key {key!r}")
        if key in _NESTED:
            if not isinstance(value, dict):
                raise ValidationError(f"{key}: expected an object")
            base = asdict(getattr(cfg, key))
            unknown = set(value) - set(base)
            if unknown:
                raise ValidationError(f"{key}: unknown keys {sorted(unknown)}")
            base.update(value)
            value = _NESTED[key](**base)
        elif key in ("noise", "trajectory"):
            if not isinstance(value, dict):
                raise ValidationError(f"{key}: expected an object")
            base = dict(getattr(cfg, key))
            unknown = set(value) - set(base)
            if unknown:
                raise ValidationError(f"{key}: unknown keys {sorted(unknown)}")
            base.update(value)
            value = base
        setattr(cfg, key, value)
    return cfg.validate()


def load_config(path):
    """Read a JSON scenario file. Raises ParseError or ValidationError."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(data)


@dataclass
class RunReport:
    """Per-epoch error traces and summary metrics of one filter on one run."""

    filter: str
    run: int
    t: np.ndarray
    ep: np.ndarray
    ev: np.ndarray
    eg: np.ndarray
    er: np.ndarray
    res_r1: np.ndarray
    res_s8: np.ndarray
    innovation_norm: np.ndarray
    diverged: bool = False
    error: str = ""
    convergence_threshold: float = 0.5

    def steady_slice(self):
        n = self.t.shape[0]
        return slice(n // 2, n)

    def _rmse(self, e):
        if self.diverged:
            return None
        tail = e[self.steady_slice()]
        return float(np.sqrt(np.mean(np.sum(tail**2, axis=1))))

    @property
    def position_rmse(self):
        return self._rmse(self.ep)

    @property
    def velocity_rmse(self):
        return self._rmse(self.ev)

    @property
    def gravity_rmse(self):
        return self._rmse(self.eg)

    @property
    def convergence_time(self):
        """First epoch after which the position error stays below the threshold."""
        if self.diverged:
            return None
        below = np.linalg.norm(self.ep, axis=1) < self.convergence_threshold
        if not below[-1]:
            return None
        above = np.flatnonzero(~below)
        k = 0 if above.size == 0 else above[-1] + 1
        return float(self.t[k])

    def summary(self):
        finite = self.innovation_norm[np.isfinite(self.innovation_norm)]
        return {
            "run": self.run,
            "position_rmse": self.position_rmse,
            "velocity_rmse": self.velocity_rmse,
            "gravity_rmse": self.gravity_rmse,
            "convergence_time": self.convergence_time,
            "innovation_rms": float(np.sqrt(np.mean(finite**2))) if finite.size else None,
            "diverged": self.diverged,
            "error": self.error,
        }

    def rows(self):
        return np.column_stack(
            [self.t, self.ep, self.ev, self.eg, self.er, self.res_r1, self.res_s8]
        )


def csv_header(n_landmarks):
    cols = ["t", "ep_x", "ep_y", "ep_z", "ev_x", "ev_y", "ev_z", "eg_x", "eg_y", "eg_z"]
    cols += [f"er_{i + 1}" for i in range(n_landmarks)]
    cols += ["res_r1", "res_s8"]
    return ",".join(cols)


def make_filter(name, config):
    s = config.landmark_array
    n_l = s.shape[0]
    tun = config.tuning
    range_dt = 1.0 / config.range_hz
    if name == AugmentedFilter.name:
        tuning = FilterTuning.default(n_l, range_dt=range_dt, qx=tun.qx, range_weight=tun.qy_range, pair_weight=tun.qy_pair, r_min=config.r_min)
        return AugmentedFilter(s, tuning)
    if name == RangeEKF.name:
        return RangeEKF(s, ChainTuning(Q=tun.ekf_q * np.eye(9), R=tun.ekf_r * np.eye(n_l), range_dt=range_dt))
    if name == AlgebraicKF.name:
        return AlgebraicKF(s, ChainTuning(Q=tun.algebraic_q * np.eye(9), R=tun.algebraic_r * np.eye(3), range_dt=range_dt))
    raise ValueError(f"unknown filter {name!r}")


def run_filter(flt, log, run=0, initial=None, convergence_threshold=0.5):
    """Drive ``flt`` through a sensor log and collect its error traces.

    Errors are recorded after each range update (``t = 1/range_hz, ...,
    duration``). A filter failure flags the report as diverged and leaves
    the remaining rows NaN.
    """
    initial = initial if initial is not None else InitialGuess()
    s = flt.landmarks
    n_l = s.shape[0]
    dec = log.decimation
    dt = log.t_imu[1] - log.t_imu[0]
    n_rec = log.ranges.shape[0] - 1
    truth = log.truth
    cols = {k: np.full((n_rec, d), np.nan) for k, d in (("ep", 3), ("ev", 3), ("eg", 3), ("er", n_l))}
    res_r1 = np.full(n_rec, np.nan)
    res_s8 = np.full(n_rec, np.nan)
    innov = np.full(n_rec, np.nan)
    diverged, error = False, ""
    try:
        flt.initialize(log.frame(0), initial.position, initial.velocity, initial.gravity)
        for j in range(n_rec):
            k0, k1 = j * dec, (j + 1) * dec
            flt.propagate(log.a_meas[k0:k1], log.w_meas[k0:k1], log.R_meas[k0:k1], dt)
            frame = log.frame(k1)
            flt.update(frame)
            nav = flt.nav(frame.R_meas)
            cols["ep"][j] = nav.p_hat - truth["p"][k1]
            cols["ev"][j] = nav.v_hat - truth["v"][k1]
            cols["eg"][j] = nav.g_hat - truth["g"][k1]
            cols["er"][j] = flt.range_estimates(frame.R_meas) - truth["ranges"][k1]
            res_r1[j], res_s8[j] = flt.restriction_residuals(frame.R_meas)
            innov[j] = np.linalg.norm(flt.innovation)
    except LblNavError as exc:
        diverged, error = True, f"{type(exc).__name__}: {exc}"
        logger.warning("%s run %d diverged: %s", flt.name, run, error)
    return RunReport(
        filter=flt.name,
        run=run,
        t=log.t_range[1:],
        res_r1=res_r1,
        res_s8=res_s8,
        innovation_norm=innov,
        diverged=diverged,
        error=error,
        convergence_threshold=convergence_threshold,
        **cols,
    )


def run_seeds(seed, runs):
    """Independent per-run seed sequences derived from the master seed."""
    return np.random.SeedSequence(seed).spawn(runs)


def _single_run(config, run, seed_seq):
    log = simulate(
        config.helix,
        config.landmark_array,
        config.noise_config,
        config.imu_hz,
        config.range_hz,
        config.duration,
        np.random.default_rng(seed_seq),
        config.r_min,
    )
    # every filter consumes the same log: paired comparison
    return [
        run_filter(make_filter(name, config), log, run, config.initial, config.convergence_threshold)
        for name in config.filters
    ]


def run_scenario(config, workers=1):
    """All filters over all Monte Carlo runs; reports ordered by run then filter."""
    config.validate()
    seeds = run_seeds(config.seed, config.monte_carlo_runs)
    if workers <= 1:
        nested = [_single_run(config, r, ss) for r, ss in enumerate(seeds)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            nested = list(pool.map(_single_run, [config] * len(seeds), range(len(seeds)), seeds))
    return [rep for reps in nested for rep in reps]


def pooled_rmse(values):
    """Root of the mean squared per-run RMSE; None if any run diverged."""
    if not values or any(v is None for v in values):
        return None
    return float(np.sqrt(np.mean(np.square(values))))


def summarize(reports):
    out = {}
    for name in dict.fromkeys(r.filter for r in reports):
        reps = [r for r in reports if r.filter == name]
        per_run = [r.summary() for r in reps]
        conv = [p["convergence_time"] for p in per_run if p["convergence_time"] is not None]
        out[name] = {
            "runs": len(reps),
            "diverged_runs": sum(r.diverged for r in reps),
            "position_rmse": pooled_rmse([p["position_rmse"] for p in per_run]),
            "velocity_rmse": pooled_rmse([p["velocity_rmse"] for p in per_run]),
            "gravity_rmse": pooled_rmse([p["gravity_rmse"] for p in per_run]),
            "convergence_time": float(np.mean(conv)) if len(conv) == len(reps) else None,
            "per_run": per_run,
        }
    return out


def _write_atomic_all(out_dir, contents):
    """Write every ``{name: text}`` to a temporary file, then rename them all."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    temps = []
    try:
        for name, text in contents.items():
            fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=f".{name}.", suffix=".tmp")
            temps.append((tmp, out_dir / name))
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
    except OSError:
        for tmp, _ in temps:
            Path(tmp).unlink(missing_ok=True)
        raise
    for tmp, final in temps:
        os.replace(tmp, final)
    return [final for _, final in temps]


def format_csv(report, n_landmarks):
    lines = [csv_header(n_landmarks)]
    for row in report.rows():
        lines.append(",".join(FLOAT_FMT % x for x in row))
    return "\n".join(lines) + "\n"


def emit_outputs(reports, out_dir, extra=None):
    """Write one CSV per (filter, run) plus ``summary.json``; returns the paths."""
    if not reports:
        raise ValueError("no reports to write")
    n_l = reports[0].er.shape[1]
    contents = {f"errors_{r.filter}_{r.run}.csv": format_csv(r, n_l) for r in reports}
    summary = summarize(reports)
    if extra:
        summary.update(extra)
    contents["summary.json"] = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    return _write_atomic_all(out_dir, contents)


def gramian_report(config):
    """Observability report on noise-free signals of the configured trajectory."""
    s = config.landmark_array
    opts = config.gramian
    t_end = max(opts.tf, config.duration if opts.window > 0 else opts.tf)
    n = int(round(t_end * config.imu_hz)) + 1
    truth = config.helix.sample(np.arange(n) / config.imu_hz)
    signals = signals_from_truth(truth, s)
    rep = gramian(opts.t0, opts.tf, signals, s, r_min=config.r_min)
    out = {"landmarks_noncoplanar": noncoplanar_check(s), **rep.to_dict()}
    if opts.window > 0:
        wins = window_gramians(signals, s, opts.window, 0.0, config.duration, r_min=config.r_min)
        out["windows"] = [w.to_dict(include_matrix=False) for w in wins]
        out["all_windows_positive_definite"] = all(w.min_eigenvalue > 0 for w in wins)
    return out


def write_gramian(report, out_dir):
    return _write_atomic_all(out_dir, {"gramian.json": json.dumps(report, indent=2) + "\n"})[0]
