"""Command-line front end.

Exit codes: 0 success (including a "no claim" verdict), 2 usage or domain
error, 3 I/O error, 4 protocol error.  ``QSV_OUTPUT_DIR`` sets the default
output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import jsonschema

from . import protocol as proto
from . import simulator as sim
from . import statistics as st
from . import strategies as strat
from .quantum import ContractError, DomainError

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_PROTOCOL = 0, 2, 3, 4
STRATEGY_CHOICES = ("lo", "uni", "uni_ba", "bi", "global")

NOISE_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": list(sim.NOISE_KINDS)},
        "value": {"type": "number"},
        "matrix": {"type": "array"},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "preset": {"enum": ["fig3", "fig4", "ideal"]},
        "theta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 90},
        "strategy": {"enum": list(STRATEGY_CHOICES)},
        "strategies": {"type": "array", "items": {"enum": list(STRATEGY_CHOICES)}, "minItems": 1},
        "noise": NOISE_SCHEMA,
        "measurements_per_trial": {"type": "integer", "minimum": 1},
        "trials": {"type": "integer", "minimum": 1},
        "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "master_seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "sampling": {"enum": ["auto", "settings", "effective"]},
        "output_dir": {"type": "string"},
        "workers": {"type": "integer", "minimum": 1},
    },
    "additionalProperties": False,
}

PRESETS = {
    "fig3": {"theta": 60.0, "strategies": ["lo", "uni", "bi"], "noise": sim.DEMO_NOISE.to_dict()},
    "fig4": {"strategies": ["uni", "bi"], "noise": sim.DEMO_NOISE.to_dict()},
    "ideal": {"theta": 60.0, "strategies": ["lo", "uni", "bi"], "noise": {"kind": "ideal"}},
}
DEFAULTS = {
    "theta": 60.0,
    "measurements_per_trial": 200,
    "trials": 50,
    "delta": 0.05,
    "master_seed": 2020,
    "sampling": "auto",
    "noise": {"kind": "ideal"},
}


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def g9(x) -> str:
    return f"{x:.9g}"


def _default_out() -> Path:
    return Path(os.environ.get("QSV_OUTPUT_DIR", "."))


def _emit(obj, as_json: bool, lines) -> None:
    if as_json:
        print(json.dumps(obj, sort_keys=True))
    else:
        for line in lines:
            print(line)


def load_config(path: str | None, preset: str | None = None) -> dict:
    """Read and schema-validate a run configuration, merged over preset and defaults."""
    raw: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise CliError(EXIT_USAGE, f"config {path} is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise CliError(EXIT_USAGE, f"config schema violation: {exc.message}") from exc
    name = preset or raw.get("preset")
    cfg = dict(DEFAULTS)
    if name:
        cfg.update(PRESETS[name])
        cfg["preset"] = name
    cfg.update(raw)
    if "strategy" in raw:
        cfg["strategies"] = [raw["strategy"]]
    cfg.setdefault("strategies", ["uni"])
    return cfg


def _trial_config(cfg: dict, strategy: str) -> sim.TrialConfig:
    return sim.TrialConfig(
        theta=float(cfg["theta"]),
        strategy=strategy,
        noise=sim.NoiseModel.from_dict(cfg["noise"]),
        measurements_per_trial=int(cfg["measurements_per_trial"]),
        trials=int(cfg["trials"]),
        delta=float(cfg["delta"]),
        master_seed=int(cfg["master_seed"]),
        sampling=cfg["sampling"],
    )


# Subcommands --------------------------------------------------------------


def cmd_info(args) -> int:
    s = strat.build(args.strategy, args.theta)
    d = strat.to_dict(s)
    lines = [
        f"strategy         {s.name}",
        f"theta            {g9(s.theta)}",
        f"lambda2          {g9(s.lambda2)}",
        f"constant_factor  {g9(d['constant_factor'])}",
        f"spectrum         {' '.join(g9(x) for x in d['spectrum'])}",
    ]
    if s.settings:
        lines.append(
            "settings         "
            + ", ".join(f"{x.label}:{g9(x.probability)}" for x in s.settings)
        )
    if s.entangled:
        lines.append("note             requires an entangled measurement")
    _emit(d, args.json, lines)
    return EXIT_OK


def cmd_bound(args) -> int:
    s = strat.build(args.strategy, args.theta)
    b = st.measurement_bound(args.epsilon, args.delta, s.lambda2)
    out = {
        "strategy": s.name,
        "theta": s.theta,
        "lambda2": s.lambda2,
        "epsilon": args.epsilon,
        "delta": args.delta,
        "n": b.ceiling,
        "n_exact": b.exact,
        "n_asymptotic": b.asymptotic,
    }
    _emit(out, args.json, [
        f"n (ceiling)      {b.ceiling}",
        f"n (exact)        {g9(b.exact)}",
        f"n (asymptotic)   {g9(b.asymptotic)}",
    ])
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, args.preset)
    out = Path(args.out or cfg.get("output_dir") or _default_out())
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot create {out}: {exc}") from exc
    noise = sim.NoiseModel.from_dict(cfg["noise"])
    common = dict(
        noise=noise,
        trials=int(cfg["trials"]),
        measurements=int(cfg["measurements_per_trial"]),
        delta=float(cfg["delta"]),
        seed=int(cfg["master_seed"]),
        workers=cfg.get("workers"),
    )
    summaries = []
    files = []
    try:
        if cfg.get("preset") == "fig3":
            res = sim.reproduce_fig3(out, **common)
            summaries = list(res.values())
            files = ["fig3a.csv", "fig3b.csv"]
        elif cfg.get("preset") == "fig4":
            res = sim.reproduce_fig4(out, **common)
            summaries = [s for panel in res.values() for s in panel.values()]
            files = ["fig4a.csv", "fig4b.csv"]
        else:
            summaries = [
                sim.run_experiment(_trial_config(cfg, k), cfg.get("workers")) for k in cfg["strategies"]
            ]
            sim.write_curves_csv(out / "simulation.csv", summaries)
            sim.write_curves_csv(out / "simulation_prefix.csv", summaries, n_max=sim.PREFIX_LEN, all_accept=True)
            files = ["simulation.csv", "simulation_prefix.csv"]
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write outputs to {out}: {exc}") from exc
    report = {
        "output_dir": str(out),
        "files": files,
        "runs": [s.to_dict() for s in summaries],
    }
    print(json.dumps(report, sort_keys=True, indent=None if args.compact else 2))
    return EXIT_OK


def _parse_noise(text: str | None) -> sim.NoiseModel | None:
    if text is None:
        return None
    kind, _, value = text.partition(":")
    if kind == "ideal":
        return sim.NoiseModel.ideal()
    if kind not in ("depolarizing", "dephasing", "misalignment") or not value:
        raise CliError(EXIT_USAGE, f"noise must be ideal or KIND:VALUE, got {text!r}")
    return sim.NoiseModel(kind, float(value))


def cmd_protocol(args) -> int:
    if args.validate:
        try:
            log = proto.read_transcript(args.validate)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(EXIT_IO, f"cannot read transcript {args.validate}: {exc}") from exc
        violations = proto.validate_transcript(log, theta=args.theta or 60.0)
        for v in violations:
            print(v)
        print(json.dumps({"violations": len(violations)}))
        return EXIT_PROTOCOL if violations else EXIT_OK

    cfg = load_config(args.config)
    if args.theta is not None:
        cfg["theta"] = args.theta
    direction = args.direction or (cfg["strategies"][0] if args.config else "uni")
    direction = {"AB": "uni", "BA": "uni_ba"}.get(direction, direction)
    if direction not in proto.POLICIES:
        raise CliError(EXIT_USAGE, f"protocol direction must be uni, uni_ba or bi, got {direction!r}")
    tc = _trial_config(cfg, direction)
    tc = tc.with_(measurements_per_trial=args.rounds)
    noise = _parse_noise(args.noise)
    if noise is not None:
        tc = tc.with_(noise=noise)
    if args.seed is not None:
        tc = tc.with_(master_seed=args.seed)

    if args.transport == "bytes":
        channel = proto.ByteStreamChannel(close_after=args.close_after)
    elif args.transport == "socket":
        channel = proto.ByteStreamChannel.socketpair(close_after=args.close_after)
    else:
        channel = proto.InMemoryChannel(close_after=args.close_after)
    try:
        result = proto.run_session(tc, channel)
    except proto.ProtocolError as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL

    out = Path(args.out or cfg.get("output_dir") or _default_out())
    summary = result.summary()
    try:
        out.mkdir(parents=True, exist_ok=True)
        proto.write_transcript(out / "transcript.jsonl", result.transcript)
        (out / "session_summary.json").write_text(json.dumps(summary, sort_keys=True) + "\n")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write session outputs to {out}: {exc}") from exc
    print(json.dumps(summary, sort_keys=True))
    if result.aborted:
        print(f"session aborted: {result.error}", file=sys.stderr)
        return EXIT_PROTOCOL
    return EXIT_OK


def _read_record(path: str) -> sim.TrialRecord:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read record {path}: {exc}") from exc
    stripped = text.strip()
    try:
        if stripped.startswith("{"):
            return sim.TrialRecord.from_dict(json.loads(stripped))
        bits = "".join(stripped.split())
        if not bits or set(bits) - {"0", "1"}:
            raise ValueError("expected a string of 0/1 characters")
        return sim.TrialRecord.from_dict({"bits": bits})
    except (ValueError, KeyError) as exc:
        raise CliError(EXIT_IO, f"unreadable record {path}: {exc}") from exc


def cmd_analyze(args) -> int:
    rec = _read_record(args.record)
    name = args.strategy or rec.strategy or None
    theta = args.theta if args.theta is not None else (rec.theta or 60.0)
    if not name:
        raise CliError(EXIT_USAGE, "strategy unknown: pass --strategy")
    s = strat.build(name, theta)
    v = st.verdict(rec.n, rec.m, args.delta, s.lambda2)
    if args.curve:
        n, inv = st.record_curve(rec.bits, args.delta, s.lambda2)
        try:
            with open(args.curve, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(("n", "inv_eps"))
                for a, b in zip(n, inv):
                    w.writerow((int(a), g9(b)))
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot write curve {args.curve}: {exc}") from exc
    out = {
        "strategy": s.name,
        "theta": s.theta,
        "lambda2": s.lambda2,
        "n": v.n,
        "m": v.m,
        "delta": v.delta,
        "claim": v.claim,
        "epsilon": v.epsilon,
    }
    lines = [f"n = {v.n}, m = {v.m}, delta = {g9(v.delta)}, strategy = {s.name}"]
    lines.append(f"epsilon = {g9(v.epsilon)}" if v.claim else "verdict: no claim")
    lines.append(v.describe())
    _emit(out, args.json, lines)
    return EXIT_OK


# Parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adaptive-qsv", description="Two-qubit state verification toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("info", help="describe a verification strategy")
    c.add_argument("--theta", type=float, default=60.0)
    c.add_argument("--strategy", choices=STRATEGY_CHOICES, default="uni")
    c.add_argument("--json", action="store_true")
    c.set_defaults(func=cmd_info)

    c = sub.add_parser("bound", help="measurements needed for (epsilon, delta)")
    c.add_argument("--epsilon", type=float, required=True)
    c.add_argument("--delta", type=float, required=True)
    c.add_argument("--strategy", choices=STRATEGY_CHOICES, default="global")
    c.add_argument("--theta", type=float, default=60.0)
    c.add_argument("--json", action="store_true")
    c.set_defaults(func=cmd_bound)

    c = sub.add_parser("simulate", help="Monte Carlo runs and figure reproduction")
    c.add_argument("config", nargs="?", help="JSON run configuration")
    c.add_argument("--preset", choices=sorted(PRESETS))
    c.add_argument("--out", help="output directory")
    c.add_argument("--compact", action="store_true", help="single-line JSON summary")
    c.set_defaults(func=cmd_simulate)

    c = sub.add_parser("protocol", help="run a message-passing protocol session")
    c.add_argument("--rounds", type=int, default=100)
    c.add_argument("--direction", choices=("uni", "uni_ba", "bi", "AB", "BA"))
    c.add_argument("--config", help="JSON run configuration (theta, noise, seed)")
    c.add_argument("--theta", type=float)
    c.add_argument("--noise", help="ideal or depolarizing:V, dephasing:P, misalignment:DEG")
    c.add_argument("--seed", type=int)
    c.add_argument("--transport", choices=("memory", "bytes", "socket"), default="memory")
    c.add_argument("--close-after", type=int, help="drop the channel after N frames")
    c.add_argument("--out", help="output directory")
    c.add_argument("--validate", metavar="TRANSCRIPT", help="only validate a transcript file")
    c.set_defaults(func=cmd_protocol)

    c = sub.add_parser("analyze", help="verdict for a recorded trial")
    c.add_argument("record")
    c.add_argument("--delta", type=float, default=0.05)
    c.add_argument("--strategy", choices=STRATEGY_CHOICES)
    c.add_argument("--theta", type=float)
    c.add_argument("--curve", help="write per-prefix 1/epsilon CSV here")
    c.add_argument("--json", action="store_true")
    c.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (DomainError, ContractError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
