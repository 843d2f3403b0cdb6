"""Monte Carlo campaigns over scenario sweeps and RIS schemes.

Every trial derives its random streams from ``(campaign seed, trial index)``
only, so all schemes and sweep values of a trial see the same user drop and
fading draw (paired comparisons). Within a trial the channel stream and the
RIS-initialization stream are independent, so adding a scheme never shifts
another scheme's draws.
"""
from __future__ import annotations

import csv
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .channel import ComplexChannelSet, dump_channels_csv, generate_channel_set
from .config import ConfigError, IqiConfig, SystemConfig, validate, with_overrides
from .impairment import channel_map
from .metrics import UtilitySpec, evaluate
from .solver import SolverSettings, ao_solve

log = logging.getLogger(__name__)

RIS_KINDS = ("none", "regular", "star", "msbd")


@dataclass(frozen=True)
class Scheme:
    ris_kind: str = "regular"
    optimize_ris: bool = True
    feasibility: str | None = None    # None: keep the config's set (T_SN falls back to T_I if invalid)
    op_mode: str | None = None
    iqi_aware: bool = True
    sectors: int | None = None        # msbd only
    label: str | None = None

    def __post_init__(self):
        if self.ris_kind not in RIS_KINDS:
            raise ValueError(f"unknown RIS kind {self.ris_kind!r}; expected one of {RIS_KINDS}")

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        parts = [self.ris_kind]
        if self.ris_kind != "none":
            parts.append("opt" if self.optimize_ris else "rand")
            if self.feasibility:
                parts.append(self.feasibility)
            if self.op_mode:
                parts.append(self.op_mode)
        if not self.iqi_aware:
            parts.append("unaware")
        return "-".join(parts)

    def apply(self, config: SystemConfig) -> SystemConfig:
        """The scenario this scheme runs on: sector count, feasibility set and mode."""
        if self.ris_kind in ("none", "regular"):
            n_s = 1
        elif self.ris_kind == "star":
            n_s = 2
        else:
            n_s = self.sectors or (config.N_s if config.N_s >= 3 else 4)
        fs = self.feasibility or config.feasibility_set
        if fs == "T_SN" and n_s != 2 and self.feasibility is None:
            fs = "T_I"
        mode = self.op_mode or (config.op_mode if n_s > 1 else "ES")
        return validate(replace(config, N_s=n_s, feasibility_set=fs, op_mode=mode))


def parse_scheme(text: str) -> Scheme:
    """Parse ``kind[:key=value...]``, e.g. ``star:set=T_SN:mode=MS:optimize=false``.

    Keys: ``set``, ``mode``, ``optimize``, ``iqi_aware``, ``sectors``, ``label``.
    """
    kind, *opts = text.strip().split(":")
    kw = {}
    for opt in opts:
        if "=" not in opt:
            raise ValueError(f"scheme option {opt!r} is not key=value")
        key, val = (s.strip() for s in opt.split("=", 1))
        if key == "set":
            kw["feasibility"] = val
        elif key == "mode":
            kw["op_mode"] = val
        elif key in ("optimize", "iqi_aware"):
            if val.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(f"scheme option {key} expects a boolean, got {val!r}")
            kw["optimize_ris" if key == "optimize" else key] = val.lower() in ("true", "1", "yes")
        elif key == "sectors":
            kw["sectors"] = int(val)
        elif key == "label":
            kw["label"] = val
        else:
            raise ValueError(f"unknown scheme option {key!r}")
    return Scheme(kind.strip(), **kw)


@dataclass(frozen=True)
class Sweep:
    field: str | None = None
    values: tuple = (None,)


SWEEP_ALIASES = {"p_c": ("power_model.p_c",), "eta": ("power_model.eta",),
                 "a_t": ("iqi.a_t", "iqi.a_r")}


def apply_sweep(config: SystemConfig, name: str | None, value) -> SystemConfig:
    """Set one sweep variable; ``a_t`` moves transmit and receive mismatch together."""
    if name is None:
        return config
    keys = SWEEP_ALIASES.get(name, (name,))
    return validate(with_overrides(config, **{k: value for k in keys}))


def parse_sweep(text: str) -> Sweep:
    if "=" not in text:
        raise ValueError(f"--sweep expects field=v1,v2,... got {text!r}")
    name, vals = text.split("=", 1)
    items = [v.strip() for v in vals.split(",")]
    if not items or any(not v for v in items):
        raise ValueError(f"--sweep {name}: empty value in {vals!r}")
    try:
        values = tuple(int(v) if v.lstrip("-").isdigit() else float(v) for v in items)
    except ValueError:
        raise ValueError(f"--sweep {name}: values must be numbers, got {vals!r}") from None
    return Sweep(name.strip(), values)


@dataclass(frozen=True)
class CampaignSpec:
    config: SystemConfig
    schemes: tuple
    utility: UtilitySpec = field(default_factory=lambda: UtilitySpec("minrate"))
    sweep: Sweep = field(default_factory=Sweep)
    trials: int = 1
    seed: int = 0
    out: str | None = None
    settings: SolverSettings | None = None
    dump_channels: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.schemes:
            raise ValueError("at least one scheme is required")
        for v in self.sweep.values:      # fail early on values the config rejects
            for s in self.schemes:
                s.apply(apply_sweep(self.config, self.sweep.field, v))


@dataclass
class TrialResult:
    seed: int
    sweep_value: object
    scheme: str
    utility: float
    rates: np.ndarray
    ees: np.ndarray
    gee: float
    iterations: int
    wall_ms: float
    checksum: str = ""
    feasible: bool = True
    error: str | None = None
    trace: list = field(default_factory=list)


def trial_seed(seed: int, trial: int) -> int:
    """Seed of trial ``trial`` in a campaign seeded ``seed``."""
    return int(np.random.SeedSequence([seed, trial]).generate_state(1, dtype=np.uint64)[0] >> 1)


def trial_streams(seed: int):
    """Independent generators for the channel draw and the RIS initialization."""
    ch, ris = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(ch), np.random.default_rng(ris)


def trial_channels(config: SystemConfig, scheme: Scheme, seed: int) -> ComplexChannelSet:
    rng_ch, _ = trial_streams(seed)
    channels = generate_channel_set(config, rng_ch)
    return channels.without_ris() if scheme.ris_kind == "none" else channels


def run_trial(config: SystemConfig, scheme: Scheme, seed: int,
              utility: UtilitySpec | None = None, settings: SolverSettings | None = None,
              sweep_value=None) -> TrialResult:
    """Solve one channel realization with one scheme; errors are recorded, not raised."""
    utility = utility or UtilitySpec("minrate")
    t0 = time.perf_counter()
    try:
        cfg = scheme.apply(config)
        settings = settings or SolverSettings(epsilon_ccp=cfg.epsilon_ccp)
        channels = trial_channels(cfg, scheme, seed)
        _, rng_ris = trial_streams(seed)
        design = cfg if scheme.iqi_aware else replace(cfg, iqi=IqiConfig.ideal())
        rep = ao_solve(design, channels, utility, settings, rng_ris,
                       optimize_ris=scheme.optimize_ris and scheme.ris_kind != "none")
        u, rates, ees, gee = rep.utility, rep.rates, rep.ees, rep.gee
        if not scheme.iqi_aware:
            # the design ignored IQI; score it on the hardware that is actually there
            real = channel_map(channels, cfg.iqi, cfg.sigma2).real_channels(rep.ris.phi)
            u, br, ees, gee = evaluate(utility, real, rep.covs, cfg.power_model)
            rates = br.r_total
        feas = rep.feasibility
        ok = bool(feas["ris_ok"]) and max(feas["neg_eig"], feas["budget_excess"]) <= 1e-9
        return TrialResult(seed, sweep_value, scheme.name, float(u), rates, ees, float(gee),
                           rep.iterations, 1e3 * (time.perf_counter() - t0),
                           channels.checksum(), ok, None, list(rep.objective_trace))
    except Exception as exc:      # noqa: BLE001 - one failed trial must not abort a campaign
        log.warning("trial seed=%s scheme=%s sweep=%s failed: %s", seed, scheme.name, sweep_value, exc)
        nan = np.full((config.L, config.K), np.nan)
        return TrialResult(seed, sweep_value, scheme.name, float("nan"), nan, nan, float("nan"),
                           0, 1e3 * (time.perf_counter() - t0), "", False, f"{type(exc).__name__}: {exc}")


@dataclass
class CampaignResult:
    summary: list      # dicts: sweep_value, scheme, utility_mean, utility_stderr, n_trials
    trials: list       # TrialResult, ordered by (sweep value, scheme, trial)

    def cell(self, sweep_value, scheme: str) -> list:
        return [t for t in self.trials if t.sweep_value == sweep_value and t.scheme == scheme]


def _run_job(job):
    cfg, scheme, seed, utility, settings, value = job
    return run_trial(cfg, scheme, seed, utility, settings, value)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("RISOPT_THREADS", "1")))
    except ValueError:
        return 1


def run_campaign(spec: CampaignSpec, progress=None) -> CampaignResult:
    """Run every (sweep value, scheme, trial) cell and aggregate per (sweep value, scheme)."""
    jobs, keys = [], []
    for vi, value in enumerate(spec.sweep.values):
        cfg = apply_sweep(spec.config, spec.sweep.field, value)
        for si, scheme in enumerate(spec.schemes):
            for t in range(spec.trials):
                jobs.append((cfg, scheme, trial_seed(spec.seed, t), spec.utility, spec.settings, value))
                keys.append((vi, si, t))
    if spec.dump_channels and spec.out:
        _dump(spec)

    results = {}
    n = _threads()
    if n > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n) as pool:
            for key, res in zip(keys, pool.map(_run_job, jobs)):
                results[key] = res
    else:
        for i, (key, job) in enumerate(zip(keys, jobs)):
            results[key] = _run_job(job)
            if progress:
                progress(i + 1, len(jobs), results[key])

    trials = [results[k] for k in sorted(results)]
    summary = []
    for vi, value in enumerate(spec.sweep.values):
        for si, scheme in enumerate(spec.schemes):
            u = np.array([results[(vi, si, t)].utility for t in range(spec.trials)])
            u = u[np.isfinite(u)]
            se = float(u.std(ddof=1) / np.sqrt(u.size)) if u.size > 1 else 0.0
            summary.append({"sweep_value": value, "scheme": scheme.name,
                            "utility_mean": float(u.mean()) if u.size else float("nan"),
                            "utility_stderr": se, "n_trials": int(u.size)})
    result = CampaignResult(summary, trials)
    if spec.out:
        write_results(result, spec.out, spec.sweep.field)
    return result


def _dump(spec: CampaignSpec) -> None:
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    scheme = spec.schemes[0]
    cfg = scheme.apply(apply_sweep(spec.config, spec.sweep.field, spec.sweep.values[0]))
    for t in range(spec.trials):
        seed = trial_seed(spec.seed, t)
        dump_channels_csv(trial_channels(cfg, scheme, seed), out / f"channels_trial{t}.csv")


def write_results(result: CampaignResult, out, sweep_field: str | None = None) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, ["sweep_value", "scheme", "utility_mean", "utility_stderr", "n_trials"])
        w.writeheader()
        w.writerows(result.summary)
    if not result.trials:
        return
    L, K = result.trials[0].rates.shape
    users = [f"rate_{l}_{k}" for l in range(L) for k in range(K)]
    with open(out / "trials.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "sweep_value", "scheme", "utility", "iterations", "wall_ms",
                    "gee", "feasible", "error"] + users)
        for t in result.trials:
            w.writerow([t.seed, t.sweep_value, t.scheme, repr(t.utility), t.iterations,
                        f"{t.wall_ms:.1f}", repr(t.gee), t.feasible, t.error or ""]
                       + [repr(float(r)) for r in np.ravel(t.rates)])


__all__ = ["CampaignResult", "CampaignSpec", "ConfigError", "Scheme", "Sweep", "TrialResult",
           "apply_sweep", "parse_scheme", "parse_sweep", "run_campaign", "run_trial", "trial_seed"]
