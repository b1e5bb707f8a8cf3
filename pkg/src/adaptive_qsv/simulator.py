"""Monte Carlo verification runs.

Random numbers
--------------
Every trial owns a NumPy ``Generator(PCG64)`` seeded from
``SeedSequence(master_seed, spawn_key=(trial_index,))``.  A round of a
strategy with explicit settings consumes three ``random()`` doubles in the
order (setting, leader outcome, follower outcome); an effective-operator
round consumes one double.  A uniform ``u`` selects outcome/event ``k`` by
inverse CDF (``u < p`` means "yes").  Replaying with the same master seed
and trial index reproduces every bit.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import quantum as q
from . import statistics as st
from .strategies import Strategy, build, setting_index

PREFIX_LEN = 25
PROB_GUARD = 1e-15

NOISE_KINDS = ("ideal", "depolarizing", "dephasing", "misalignment", "custom")


@dataclass(frozen=True)
class NoiseModel:
    kind: str = "ideal"
    value: float = 0.0
    matrix: tuple | None = None

    @classmethod
    def ideal(cls) -> "NoiseModel":
        return cls("ideal")

    @classmethod
    def depolarizing(cls, visibility: float) -> "NoiseModel":
        return cls("depolarizing", float(visibility))

    @classmethod
    def dephasing(cls, p: float) -> "NoiseModel":
        return cls("dephasing", float(p))

    @classmethod
    def misalignment(cls, dtheta: float) -> "NoiseModel":
        return cls("misalignment", float(dtheta))

    @classmethod
    def custom(cls, rho: np.ndarray) -> "NoiseModel":
        rho = q.check_density(rho)
        return cls("custom", 0.0, tuple(map(tuple, rho.tolist())))

    def to_dict(self) -> dict:
        if self.kind == "custom":
            m = np.asarray(self.matrix, dtype=complex)
            return {"kind": "custom", "matrix": [[[z.real, z.imag] for z in row] for row in m]}
        if self.kind == "ideal":
            return {"kind": "ideal"}
        return {"kind": self.kind, "value": self.value}

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseModel":
        kind = d.get("kind", "ideal")
        if kind == "custom":
            m = np.array([[complex(re, im) for re, im in row] for row in d["matrix"]])
            return cls.custom(m)
        if kind not in NOISE_KINDS:
            raise q.DomainError(f"unknown noise kind {kind!r}")
        return cls(kind, float(d.get("value", 0.0)))


# Bends the averaged 60-degree curves visibly within 200 rounds.
DEMO_NOISE = NoiseModel.depolarizing(0.98)


def apply_noise(theta: float, model: NoiseModel) -> np.ndarray:
    """Density matrix emitted by a source aiming at the target at ``theta``."""
    kind, x = model.kind, model.value
    if kind == "ideal":
        return q.projector(q.target_state(theta))
    if kind == "depolarizing":
        if not 0 <= x <= 1:
            raise q.DomainError(f"visibility must lie in [0, 1], got {x}")
        return x * q.projector(q.target_state(theta)) + (1 - x) * q.I4 / 4
    if kind == "dephasing":
        if not 0 <= x <= 1:
            raise q.DomainError(f"dephasing strength must lie in [0, 1], got {x}")
        rho = q.projector(q.target_state(theta))
        rho[1, 2] *= 1 - x
        rho[2, 1] *= 1 - x
        return rho
    if kind == "misalignment":
        return q.projector(q.target_state(theta + x))
    if kind == "custom":
        return q.check_density(np.asarray(model.matrix, dtype=complex))
    raise q.DomainError(f"unknown noise kind {kind!r}")


@dataclass(frozen=True)
class RoundResult:
    accept: bool
    setting: int | None = None
    leader_outcome: int | None = None


def _pick(p1: float, u: float) -> int:
    """Outcome 1 with probability p1; never lands on a zero-probability branch."""
    p1 = min(max(p1, 0.0), 1.0)
    a = 1 if u < p1 else 0
    if (a == 1 and p1 < PROB_GUARD) or (a == 0 and 1 - p1 < PROB_GUARD):
        a = 1 - a
    return a


def run_round(
    strategy: Strategy, sigma: np.ndarray, rng: np.random.Generator, mode: str = "auto"
) -> RoundResult:
    """One verification round on ``sigma``.

    In setting mode the leader is measured first, the joint state is
    collapsed and renormalized, and the follower's conditional projector is
    tested on the collapsed state.  In effective mode a single Bernoulli
    draw with probability tr(omega sigma) decides.
    """
    if _use_settings(strategy, mode):
        u = rng.random(3)
        l = setting_index(strategy, u[0])
        s = strategy.settings[l]
        probs = [
            q.expectation(s.embed(s.leader_projector(a), q.I2), sigma) for a in (0, 1)
        ]
        a = _pick(probs[1], u[1])
        lead = s.embed(s.leader_projector(a), q.I2)
        post = lead @ sigma @ lead / probs[a]
        p_acc = q.expectation(s.embed(q.I2, s.follower_projector(a)), post)
        return RoundResult(bool(u[2] < p_acc), l, a)
    p = q.expectation(strategy.omega, sigma)
    return RoundResult(bool(rng.random() < p))


def _use_settings(strategy: Strategy, mode: str) -> bool:
    if mode == "effective":
        return False
    if mode == "settings":
        if not strategy.settings:
            raise ValueError(f"{strategy.name} has no explicit settings")
        return True
    if mode == "auto":
        return strategy.has_settings
    raise ValueError(f"unknown sampling mode {mode!r}")


def branch_table(strategy: Strategy, sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-setting leader outcome-1 probabilities and conditional accept probabilities.

    Returns ``(p_leader1, p_accept)`` with shapes (L,) and (L, 2), where
    ``p_accept[l, a]`` is the follower's pass probability after the leader
    obtained ``a``.
    """
    L = len(strategy.settings)
    p1 = np.zeros(L)
    pacc = np.zeros((L, 2))
    for l, s in enumerate(strategy.settings):
        for a in (0, 1):
            lead = s.embed(s.leader_projector(a), q.I2)
            pa = q.expectation(lead, sigma)
            if a == 1:
                p1[l] = pa
            if pa > PROB_GUARD:
                joint = q.expectation(s.embed(s.leader_projector(a), s.follower_projector(a)), sigma)
                pacc[l, a] = min(max(joint / pa, 0.0), 1.0)
    return np.clip(p1, 0.0, 1.0), pacc


def run_rounds(
    strategy: Strategy, sigma: np.ndarray, rng: np.random.Generator, n: int, mode: str = "auto"
) -> tuple[np.ndarray, np.ndarray | None, np.ndarray | None]:
    """``n`` rounds at once; consumes the stream exactly like ``n`` calls of :func:`run_round`.

    Returns ``(bits, setting_trace, leader_outcomes)``; the traces are None
    in effective mode.
    """
    if _use_settings(strategy, mode):
        u = rng.random((n, 3))
        cdf = np.cumsum(strategy.probabilities)
        ls = np.minimum(np.searchsorted(cdf, u[:, 0], side="right"), len(cdf) - 1)
        p1, pacc = branch_table(strategy, sigma)
        a = (u[:, 1] < p1[ls]).astype(np.int8)
        a = np.where((a == 1) & (p1[ls] < PROB_GUARD), 0, a)
        a = np.where((a == 0) & (1 - p1[ls] < PROB_GUARD), 1, a)
        bits = (u[:, 2] < pacc[ls, a]).astype(np.uint8)
        return bits, ls.astype(np.int8), a
    p = q.expectation(strategy.omega, sigma)
    return (rng.random(n) < p).astype(np.uint8), None, None


def trial_rng(master_seed: int, trial_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(trial_index),))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class TrialConfig:
    theta: float = 60.0
    strategy: str = "uni"
    noise: NoiseModel = field(default_factory=NoiseModel.ideal)
    measurements_per_trial: int = 200
    trials: int = 50
    delta: float = 0.05
    master_seed: int = 0
    sampling: str = "auto"

    def __post_init__(self):
        if self.measurements_per_trial < 1 or self.trials < 1:
            raise ValueError("measurements_per_trial and trials must be >= 1")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")

    def with_(self, **kw) -> "TrialConfig":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(kw)
        return TrialConfig(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["noise"] = self.noise.to_dict()
        return d


@dataclass
class TrialRecord:
    bits: np.ndarray
    master_seed: int
    trial_index: int
    setting_trace: np.ndarray | None = None
    leader_outcomes: np.ndarray | None = None
    strategy: str = ""
    theta: float = 0.0

    @property
    def n(self) -> int:
        return int(self.bits.size)

    @property
    def m(self) -> int:
        return int(self.bits.sum())

    def bitstring(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "theta": self.theta,
            "master_seed": self.master_seed,
            "trial_index": self.trial_index,
            "n": self.n,
            "m": self.m,
            "bits": self.bitstring(),
            "settings": None if self.setting_trace is None else self.setting_trace.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrialRecord":
        bits = np.array([int(c) for c in d["bits"]], dtype=np.uint8)
        if bits.size and bits.max() > 1:
            raise ValueError("bits must be a string of 0/1 characters")
        tr = d.get("settings")
        return cls(
            bits=bits,
            master_seed=int(d.get("master_seed", 0)),
            trial_index=int(d.get("trial_index", 0)),
            setting_trace=None if tr is None else np.array(tr, dtype=np.int8),
            strategy=d.get("strategy", ""),
            theta=float(d.get("theta", 0.0)),
        )


def run_trial(config: TrialConfig, trial_index: int = 0) -> TrialRecord:
    strategy = build(config.strategy, config.theta)
    sigma = apply_noise(config.theta, config.noise)
    rng = trial_rng(config.master_seed, trial_index)
    bits, ls, a = run_rounds(strategy, sigma, rng, config.measurements_per_trial, config.sampling)
    return TrialRecord(
        bits=bits,
        master_seed=config.master_seed,
        trial_index=trial_index,
        setting_trace=ls,
        leader_outcomes=a,
        strategy=strategy.name,
        theta=config.theta,
    )


def prefix_inverse_infidelity(bits: np.ndarray, delta: float, lambda2: float) -> np.ndarray:
    """1/epsilon after each prefix of ``bits``; NaN where no claim is possible."""
    m = np.cumsum(bits, dtype=np.int64)
    out = np.full(bits.size, np.nan)
    for i, mn in enumerate(m.tolist()):
        try:
            out[i] = 1 / st.infidelity_at_confidence(i + 1, mn, delta, lambda2)
        except st.NoClaimError:
            pass
    return out


@dataclass
class RunSummary:
    config: TrialConfig
    lambda2: float
    n: np.ndarray
    mean_inv_eps: np.ndarray
    std_inv_eps: np.ndarray
    valid_trials: np.ndarray
    theory_inv_eps: np.ndarray
    std_slope: float
    accept_frequency: float
    all_accept_trials: int
    all_accept_inv_eps: np.ndarray
    prefix_slope_all_accept: float | None
    prefix_slope_averaged: float | None
    theory_prefix_slope: float
    asymptotic_slope: float
    records: list[TrialRecord] = field(repr=False, default_factory=list)

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "lambda2": self.lambda2,
            "accept_frequency": self.accept_frequency,
            "std_slope": self.std_slope,
            "all_accept_trials": self.all_accept_trials,
            "prefix_slope_all_accept": self.prefix_slope_all_accept,
            "prefix_slope_averaged": self.prefix_slope_averaged,
            "theory_prefix_slope": self.theory_prefix_slope,
            "asymptotic_slope": self.asymptotic_slope,
            "final_mean_inv_eps": _nan_to_none(self.mean_inv_eps[-1]),
        }


def _nan_to_none(x: float) -> float | None:
    return None if not np.isfinite(x) else float(x)


def _fit_valid(n: np.ndarray, y: np.ndarray) -> float | None:
    ok = np.isfinite(y)
    if ok.sum() < 2:
        return None
    return st.fit_slope(n[ok], y[ok])


def _column_stats(curves: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    valid = np.isfinite(curves).sum(axis=0)
    total = np.where(np.isfinite(curves), curves, 0.0).sum(axis=0)
    mean = np.divide(total, valid, out=np.full(curves.shape[1], np.nan), where=valid > 0)
    dev = np.where(np.isfinite(curves), curves - mean, 0.0)
    var = np.divide((dev**2).sum(axis=0), valid, out=np.full(curves.shape[1], np.nan), where=valid > 0)
    return mean, np.sqrt(var), valid


def summarize(config: TrialConfig, records: Sequence[TrialRecord]) -> RunSummary:
    """Aggregate trial records (in trial-index order) into curves and fits."""
    strategy = build(config.strategy, config.theta)
    lam = strategy.lambda2
    N = config.measurements_per_trial
    n = np.arange(1, N + 1)
    curves = np.vstack([prefix_inverse_infidelity(r.bits, config.delta, lam) for r in records])
    mean, std, valid = _column_stats(curves)

    k = min(PREFIX_LEN, N)
    head = np.array([bool(r.bits[:k].all()) for r in records])
    if head.any():
        aa_mean = _column_stats(curves[head, :k])[0]
    else:
        aa_mean = np.full(k, np.nan)
    theory = 1 / st.all_accept_infidelity(n, config.delta, lam)

    ok = np.isfinite(std)
    return RunSummary(
        config=config,
        lambda2=lam,
        n=n,
        mean_inv_eps=mean,
        std_inv_eps=std,
        valid_trials=valid,
        theory_inv_eps=theory,
        std_slope=st.fit_proportional(n[ok], std[ok]) if ok.any() else math.nan,
        accept_frequency=float(sum(r.m for r in records)) / (N * len(records)),
        all_accept_trials=int(head.sum()),
        all_accept_inv_eps=aa_mean,
        prefix_slope_all_accept=_fit_valid(n[:k], aa_mean),
        prefix_slope_averaged=_fit_valid(n[:k], mean[:k]),
        theory_prefix_slope=st.fit_slope(n[:k], theory[:k]),
        asymptotic_slope=st.asymptotic_slope(lam, config.delta),
        records=list(records),
    )


def _trial_job(args):
    config, i = args
    return run_trial(config, i)


def run_experiment(config: TrialConfig, workers: int | None = None) -> RunSummary:
    """Run ``config.trials`` independent trials and aggregate them.

    ``workers > 1`` runs trials in separate processes; the result is
    identical to the serial run because each trial owns its stream and
    aggregation follows trial-index order.
    """
    jobs = [(config, i) for i in range(config.trials)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            records = list(ex.map(_trial_job, jobs))
    else:
        records = [_trial_job(j) for j in jobs]
    return summarize(config, records)


# Figure reproduction ------------------------------------------------------

CSV_COLUMNS = ("strategy", "n", "mean_inv_eps", "std_inv_eps", "theory_inv_eps")


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "nan" if not np.isfinite(x) else f"{x:.9g}"


def write_curves_csv(path: str | os.PathLike, summaries: Sequence[RunSummary], n_max: int | None = None,
                     all_accept: bool = False) -> Path:
    """Write one figure panel; ``all_accept`` adds the filtered-trial mean column."""
    path = Path(path)
    cols = CSV_COLUMNS + (("all_accept_mean_inv_eps",) if all_accept else ())
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for s in summaries:
            k = len(s.n) if n_max is None else min(n_max, len(s.n))
            for i in range(k):
                row = [s.config.strategy, s.n[i], s.mean_inv_eps[i], s.std_inv_eps[i], s.theory_inv_eps[i]]
                if all_accept:
                    row.append(s.all_accept_inv_eps[i] if i < len(s.all_accept_inv_eps) else math.nan)
                w.writerow([_fmt(x) for x in row])
    return path


FIG3 = {"theta": 60.0, "strategies": ("lo", "uni", "bi")}
FIG4 = {"panels": (("fig4a", 70.0), ("fig4b", 80.0)), "strategies": ("uni", "bi")}


def _base(noise, trials, measurements, delta, seed) -> TrialConfig:
    return TrialConfig(
        noise=noise, trials=trials, measurements_per_trial=measurements, delta=delta, master_seed=seed
    )


def reproduce_fig3(
    out_dir: str | os.PathLike,
    noise: NoiseModel = DEMO_NOISE,
    trials: int = 50,
    measurements: int = 200,
    delta: float = 0.05,
    seed: int = 2020,
    workers: int | None = None,
) -> dict[str, RunSummary]:
    """Write ``fig3a.csv`` (full range) and ``fig3b.csv`` (first 25 rounds)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = _base(noise, trials, measurements, delta, seed).with_(theta=FIG3["theta"])
    sums = {k: run_experiment(base.with_(strategy=k), workers) for k in FIG3["strategies"]}
    write_curves_csv(out / "fig3a.csv", list(sums.values()))
    write_curves_csv(out / "fig3b.csv", list(sums.values()), n_max=PREFIX_LEN, all_accept=True)
    return sums


def reproduce_fig4(
    out_dir: str | os.PathLike,
    noise: NoiseModel = DEMO_NOISE,
    trials: int = 50,
    measurements: int = 200,
    delta: float = 0.05,
    seed: int = 2020,
    workers: int | None = None,
) -> dict[str, dict[str, RunSummary]]:
    """Write ``fig4a.csv`` (70 degrees) and ``fig4b.csv`` (80 degrees), Uni vs Bi."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = _base(noise, trials, measurements, delta, seed)
    result = {}
    for panel, theta in FIG4["panels"]:
        sums = {
            k: run_experiment(base.with_(theta=theta, strategy=k), workers) for k in FIG4["strategies"]
        }
        write_curves_csv(out / f"{panel}.csv", list(sums.values()))
        result[panel] = sums
    return result
