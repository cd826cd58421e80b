"""Command-line harness: parsing, validation, dispatch, emission.

Subcommands: honest, attack1, attack2, phase-error, graph-scan,
coverage-scan, verify-appendix-c.  Values may come from a flat
``key = value`` config file (``--config``); explicit flags always win.
Scan commands require an explicit --seed (no silent entropy); other
commands default to seed 0.  Exit codes: 0 success, 1 claim-check FAIL,
2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from . import analysis, attack1, attack2, protocol, security
from .errors import ParameterError, UsageError
from .reporting import ResultEnvelope, canonical_json, emit
from .seeding import make_rng

SCAN_COMMANDS = ("graph-scan", "coverage-scan")

# name -> type per command; used for config-file coercion and rejection
_PARAMS: dict[str, dict[str, type]] = {
    "honest": {"L": int, "rounds": int},
    "attack1": {"n": int, "rounds": int, "policy": str},
    "attack2": {"L": int, "rounds": int, "mix_prob": float},
    "phase-error": {"n": int},
    "graph-scan": {"n": str, "p": float, "M": int, "critical": bool,
                   "threshold": float, "trials": int, "confidence": float},
    "coverage-scan": {"m": int, "n": str, "distinct": bool,
                      "threshold": float, "trials": int, "confidence": float},
    "verify-appendix-c": {"trials": int, "restarts": int, "d_F": int, "d_E": int,
                          "penalty_weight": float, "maxiter": int},
}
_COMMON = {"seed": int, "threads": int, "out": str, "format": str,
           "plot_dir": str, "config": str}

_DEFAULTS: dict[str, dict] = {
    "honest": {"L": 5, "rounds": 10_000},
    "attack1": {"n": 1001, "rounds": 10_000, "policy": "random"},
    "attack2": {"L": 5, "rounds": 100_000, "mix_prob": 1.0},
    "phase-error": {"n": 1001},
    "graph-scan": {"n": "1000", "p": None, "M": None, "critical": False,
                   "threshold": None, "trials": 1000, "confidence": 0.99},
    "coverage-scan": {"m": 200, "n": "1000", "distinct": False,
                      "threshold": None, "trials": 1000, "confidence": 0.99},
    "verify-appendix-c": {"trials": 100, "restarts": 20, "d_F": 3, "d_E": 2,
                          "penalty_weight": 1e3, "maxiter": 60},
}


@dataclass
class ExperimentConfig:
    command: str
    params: dict
    seed: int
    threads: int
    out: str | None
    fmt: str
    plot_dir: str | None


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rrdps-lab",
        description="RRDPS untrusted-measurement simulation lab")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None,
                       help="master seed (required for scan commands)")
        p.add_argument("--threads", type=int, default=None,
                       help="worker pool size for scan trials (default: all cores)")
        p.add_argument("--config", type=str, default=None,
                       help="flat key = value config file; flags override it")
        p.add_argument("--out", type=str, default=None, help="output file path")
        p.add_argument("--format", dest="fmt", choices=("json", "csv"),
                       default=None, help="output format (default json)")
        p.add_argument("--plot-dir", type=str, default=None,
                       help="also render figures into this directory")

    p = sub.add_parser("honest", help="honest protocol session")
    p.add_argument("--L", type=int, default=None, help="pulses per train")
    p.add_argument("--rounds", type=int, default=None)
    common(p)

    p = sub.add_parser("attack1", help="pair-harvesting attack session")
    p.add_argument("--n", type=int, default=None, help="pulses per train (odd)")
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--policy", choices=attack1.RESPOND_POLICIES, default=None,
                   help="candidate-pair selection policy")
    common(p)

    p = sub.add_parser("attack2", help="index-entangling ancilla attack session")
    p.add_argument("--L", type=int, default=None, help="pulses per train")
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--mix-prob", dest="mix_prob", type=float, default=None,
                   help="per-round probability of attacking (0..1)")
    common(p)

    p = sub.add_parser("phase-error", help="phase-error formulas at the attack point")
    p.add_argument("--n", type=int, default=None, help="train length (odd)")
    common(p)

    p = sub.add_parser("graph-scan", help="largest-component Monte Carlo scan")
    p.add_argument("--n", type=str, default=None,
                   help="node count, or comma list for a scaling fit")
    p.add_argument("--p", type=float, default=None, help="edge probability model")
    p.add_argument("--M", type=int, default=None, help="edge count model")
    p.add_argument("--critical", action="store_const", const=True, default=None,
                   help="use the critical edge count M = (n-1)/2 per n")
    p.add_argument("--threshold", type=float, default=None,
                   help="component-size success threshold")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--confidence", type=float, default=None)
    common(p)

    p = sub.add_parser("coverage-scan", help="difference-coverage Monte Carlo scan")
    p.add_argument("--m", type=int, default=None, help="members drawn per trial")
    p.add_argument("--n", type=str, default=None, help="index range size")
    p.add_argument("--distinct", action="store_const", const=True, default=None,
                   help="sample members without replacement")
    p.add_argument("--threshold", type=float, default=None,
                   help="coverage success threshold")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--confidence", type=float, default=None)
    common(p)

    p = sub.add_parser("verify-appendix-c",
                       help="zero-leakage verification for the 3-pulse perfect case")
    p.add_argument("--trials", type=int, default=None,
                   help="random constraint-satisfying models to sample")
    p.add_argument("--restarts", type=int, default=None, help="optimizer restarts")
    p.add_argument("--d-F", dest="d_F", type=int, default=None, help="carrier dimension")
    p.add_argument("--d-E", dest="d_E", type=int, default=None, help="ancilla dimension")
    p.add_argument("--penalty-weight", dest="penalty_weight", type=float, default=None)
    p.add_argument("--maxiter", type=int, default=None)
    common(p)
    return parser


def _coerce(command: str, key: str, raw: str):
    kind = _PARAMS[command].get(key) or _COMMON.get(key)
    try:
        if kind is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except (TypeError, ValueError):
        raise UsageError(f"malformed value for {key!r}: {raw!r}") from None


def _read_config_file(command: str, path: str) -> dict:
    """Flat ``key = value`` lines; blank lines and # comments ignored."""
    values = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip().replace("-", "_")
        raw = raw.strip()
        if key not in _PARAMS[command] and key not in ("seed", "threads", "format",
                                                       "out", "plot_dir"):
            raise UsageError(f"{path}:{lineno}: unknown key {key!r} for {command}")
        values[key] = _coerce(command, key if key in _PARAMS[command] else key, raw)
    return values


def _parse_n_list(raw) -> list[int]:
    if isinstance(raw, int):
        return [raw]
    try:
        ns = [int(part) for part in str(raw).split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"malformed value for 'n': {raw!r}") from None
    if not ns:
        raise UsageError("empty n list")
    return ns


def _validate(command: str, params: dict, seed: int):
    """Surface module preconditions before any computation starts."""
    if seed < 0:
        raise UsageError("seed must be a non-negative integer")
    if command == "honest":
        if params["L"] < 2:
            raise UsageError("L must be >= 2")
        if params["rounds"] < 1:
            raise UsageError("rounds must be >= 1")
    elif command == "attack1":
        if params["n"] < 3 or params["n"] % 2 == 0:
            raise UsageError(f"n must be odd and >= 3, got {params['n']}")
        if params["rounds"] < 1:
            raise UsageError("rounds must be >= 1")
    elif command == "attack2":
        if params["L"] < 2:
            raise UsageError("L must be >= 2")
        if params["rounds"] < 1:
            raise UsageError("rounds must be >= 1")
        if not 0.0 <= params["mix_prob"] <= 1.0:
            raise UsageError("mix_prob must be in [0, 1]")
    elif command == "phase-error":
        if params["n"] < 3 or params["n"] % 2 == 0:
            raise UsageError(f"n must be odd and >= 3, got {params['n']}")
    elif command == "graph-scan":
        ns = _parse_n_list(params["n"])
        if any(n < 2 for n in ns):
            raise UsageError("all n must be >= 2")
        models = sum(x is not None and x is not False
                     for x in (params["p"], params["M"], params["critical"] or None))
        if models != 1:
            raise UsageError("give exactly one of --p, --M, --critical")
        if len(ns) > 1 and not params["critical"]:
            raise UsageError("a scaling fit over several n requires --critical")
        if params["p"] is not None and not 0.0 <= params["p"] <= 1.0:
            raise UsageError("p must be in [0, 1]")
        if params["M"] is not None and params["M"] < 0:
            raise UsageError("M must be >= 0")
        if params["trials"] < 1:
            raise UsageError("trials must be >= 1")
        if not 0.0 < params["confidence"] < 1.0:
            raise UsageError("confidence must be in (0, 1)")
    elif command == "coverage-scan":
        ns = _parse_n_list(params["n"])
        if len(ns) != 1:
            raise UsageError("coverage-scan takes a single n")
        if ns[0] < 2:
            raise UsageError("n must be >= 2")
        if params["m"] < 1 or params["m"] > ns[0]:
            raise UsageError(f"m must be in [1, n], got {params['m']}")
        if params["trials"] < 1:
            raise UsageError("trials must be >= 1")
        if not 0.0 < params["confidence"] < 1.0:
            raise UsageError("confidence must be in (0, 1)")
    elif command == "verify-appendix-c":
        if params["d_F"] < 3 or params["d_F"] > 8:
            raise UsageError("d_F must be in [3, 8]")
        if params["d_E"] < 1 or params["d_E"] > 8:
            raise UsageError("d_E must be in [1, 8]")
        if params["trials"] < 1 or params["restarts"] < 1:
            raise UsageError("trials and restarts must be >= 1")


def parse_config(argv=None) -> ExperimentConfig:
    """Parse flags, merge the optional config file, validate everything."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit:
        raise
    command = args.command
    merged = dict(_DEFAULTS[command])
    extras = {"seed": None, "threads": None, "out": None, "format": None,
              "plot_dir": None}
    if args.config:
        file_values = _read_config_file(command, args.config)
        for key, value in file_values.items():
            if key in merged:
                merged[key] = value
            else:
                extras[key if key != "fmt" else "format"] = value
    for key in _PARAMS[command]:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    for key, attr in (("seed", "seed"), ("threads", "threads"), ("out", "out"),
                      ("format", "fmt"), ("plot_dir", "plot_dir")):
        flag = getattr(args, attr, None)
        if flag is not None:
            extras[key] = flag

    if extras["seed"] is None:
        if command in SCAN_COMMANDS:
            raise UsageError(f"--seed is required for {command} (no silent entropy)")
        extras["seed"] = 0
    seed = int(extras["seed"])
    threads = int(extras["threads"]) if extras["threads"] is not None \
        else (os.cpu_count() or 1)
    if threads < 1:
        raise UsageError("threads must be >= 1")
    fmt = extras["format"] or "json"
    if fmt not in ("json", "csv"):
        raise UsageError(f"unknown format {fmt!r}")

    _validate(command, merged, seed)
    return ExperimentConfig(command, merged, seed, threads,
                            extras["out"], fmt, extras["plot_dir"])


def _verdict(claim: str, ok: bool) -> dict:
    return {"claim": claim, "pass": bool(ok)}


def _run_honest(cfg: ExperimentConfig):
    stats = protocol.run_honest_session(cfg.params["L"], cfg.params["rounds"],
                                        make_rng(cfg.seed), keep_rounds=True)
    payload = {
        "L": stats.L, "rounds": stats.rounds, "announced": stats.announced,
        "losses": stats.losses, "errors": stats.errors, "qber": stats.qber,
        "detection_rate": stats.announced / stats.rounds,
        "pairing_note": protocol.PAIRING_NOTE,
    }
    verdicts = [_verdict("qber == 0 on announced rounds", stats.errors == 0)]
    return payload, stats.round_log, verdicts


def _run_attack1(cfg: ExperimentConfig):
    stats = attack1.run_attack1_session(cfg.params["n"], cfg.params["rounds"],
                                        make_rng(cfg.seed),
                                        policy=cfg.params["policy"],
                                        keep_rounds=True)
    payload = {
        "n": stats.n, "rounds": stats.rounds, "policy": stats.policy,
        "component_size": stats.component_size, "coverage": stats.coverage,
        "announced": stats.announced, "losses": stats.losses,
        "loss_rate": stats.losses / stats.rounds, "qber": stats.qber,
        "eve_correct": stats.eve_correct,
        "eve_accuracy": stats.eve_correct / stats.announced if stats.announced else 0.0,
        "pairing_note": protocol.PAIRING_NOTE,
    }
    verdicts = [
        _verdict("qber == 0 on announced rounds", stats.qber == 0.0),
        _verdict("eve bit == alice bit on every announced round",
                 stats.eve_correct == stats.announced),
    ]
    return payload, stats.round_log, verdicts


def _run_attack2(cfg: ExperimentConfig):
    stats = attack2.run_attack2_session(cfg.params["L"], cfg.params["rounds"],
                                        cfg.params["mix_prob"], make_rng(cfg.seed),
                                        keep_rounds=True)
    payload = {
        "L": stats.L, "rounds": stats.rounds, "mix_prob": stats.mix_prob,
        "announced": stats.announced, "losses": stats.losses,
        "loss_rate": stats.loss_rate, "qber": stats.qber,
        "attacked_announced": stats.attacked_announced,
        "eve_correct": stats.eve_correct,
        "eve_accuracy": (stats.eve_correct / stats.attacked_announced
                         if stats.attacked_announced else 0.0),
        "pairing_note": protocol.PAIRING_NOTE,
    }
    verdicts = [_verdict("eve bit == alice bit on every attacked announced round",
                         stats.eve_correct == stats.attacked_announced)]
    if stats.mix_prob == 1.0:
        verdicts.append(_verdict("qber = 0.5 +/- 0.01",
                                 abs(stats.qber - 0.5) <= 0.01))
        verdicts.append(_verdict("loss = 0.5 +/- 0.01",
                                 abs(stats.loss_rate - 0.5) <= 0.01))
    elif stats.mix_prob == 0.5:
        verdicts.append(_verdict("qber = 0.25 +/- 0.01",
                                 abs(stats.qber - 0.25) <= 0.01))
    return payload, stats.round_log, verdicts


def _run_phase_error(cfg: ExperimentConfig):
    report = analysis.contradiction_report(cfg.params["n"])
    payload = report.to_dict()
    samples = [payload.copy()]
    verdicts = [
        _verdict("original formula == 1/2 at the attack point",
                 report.original == 0.5),
        _verdict("improved formula < 1/2 despite full leakage (contradiction)",
                 report.contradiction),
    ]
    return payload, samples, verdicts


def _scan_payload(report, statistic_name: str) -> dict:
    payload = report.to_dict()
    payload["statistic_name"] = statistic_name
    return payload


def _scan_samples(report) -> list:
    rows = []
    for idx, value in enumerate(report.samples):
        row = {"trial": idx, "statistic": value}
        if report.threshold is not None:
            row["success"] = int(value >= report.threshold)
        rows.append(row)
    return rows


def _run_graph_scan(cfg: ExperimentConfig):
    ns = _parse_n_list(cfg.params["n"])
    trials = cfg.params["trials"]
    confidence = cfg.params["confidence"]
    if len(ns) > 1:
        fit = analysis.critical_scaling_scan(ns, trials, cfg.seed, cfg.threads)
        payload = fit.to_dict()
        payload["trials"] = trials
        samples = [{"n": n, "trial": idx, "statistic": size}
                   for n, rep in zip(fit.ns, fit.reports)
                   for idx, size in enumerate(rep.samples)]
        verdicts = [_verdict("median-size exponent within 2/3 +/- 0.1",
                             abs(fit.exponent - 2.0 / 3.0) <= 0.1)]
        return payload, samples, verdicts
    n = ns[0]
    M = (n - 1) // 2 if cfg.params["critical"] else cfg.params["M"]
    report = analysis.component_scan(
        n, p=cfg.params["p"], M=M, threshold=cfg.params["threshold"],
        trials=trials, seed=cfg.seed, threads=cfg.threads, confidence=confidence)
    payload = _scan_payload(report, "largest component size")
    verdicts = []
    if report.threshold is not None:
        verdicts.append(_verdict(
            f"P(largest component >= {report.threshold:g}) "
            f"{confidence:.0%} lower bound >= 0.99",
            report.lower_bound >= 0.99))
    return payload, _scan_samples(report), verdicts


def _run_coverage_scan(cfg: ExperimentConfig):
    n = _parse_n_list(cfg.params["n"])[0]
    report = analysis.coverage_scan(
        cfg.params["m"], n, threshold=cfg.params["threshold"],
        trials=cfg.params["trials"], seed=cfg.seed, threads=cfg.threads,
        distinct=bool(cfg.params["distinct"]), confidence=cfg.params["confidence"])
    payload = _scan_payload(report, "difference coverage")
    verdicts = []
    if report.threshold is not None:
        verdicts.append(_verdict(
            f"P(coverage >= {report.threshold:g}) "
            f"{cfg.params['confidence']:.0%} lower bound >= 0.99",
            report.lower_bound >= 0.99))
    return payload, _scan_samples(report), verdicts


def _run_verify(cfg: ExperimentConfig):
    report = security.verify_theorem(cfg.params["trials"], seed=cfg.seed,
                                     d_E=cfg.params["d_E"])
    outcome = security.optimize_leakage(
        cfg.params["d_F"], cfg.params["d_E"],
        penalty_weight=cfg.params["penalty_weight"],
        restarts=cfg.params["restarts"], seed=cfg.seed + 1,
        maxiter=cfg.params["maxiter"])
    samples = list(report.rows)
    for entry in outcome.history:
        samples.append({"model": entry["restart"], "kind": "optimized",
                        "residual": entry["residual"],
                        "leakage": entry["leakage"],
                        "ok": int(entry["residual"] > security.RESIDUAL_TOL
                                  or entry["leakage"] <= security.LEAKAGE_TOL)})
    feasible_leaks = [row["leakage"] for row in samples
                      if row["residual"] <= security.RESIDUAL_TOL]
    max_feasible_leak = max(feasible_leaks) if feasible_leaks else 0.0
    payload = {
        "sampled_models": report.trials,
        "sampled_passes": report.passes,
        "identity_ok": report.identity_ok,
        "optimizer": outcome.to_dict(),
        "max_feasible_leakage": max_feasible_leak,
        "counterexample_rejected": report.counterexample_rejected,
        "counterexample_residual_name": report.counterexample_residual_name,
        "counterexample_residual": report.counterexample_residual,
        "counterexample_leakage": report.counterexample_leakage,
        "residual_tol": security.RESIDUAL_TOL,
        "leakage_tol": security.LEAKAGE_TOL,
    }
    verdicts = [
        _verdict("every model with residual <= 1e-6 leaks <= 1e-4",
                 report.all_passed and max_feasible_leak <= security.LEAKAGE_TOL),
        _verdict("leaky counterexample rejected with a named residual",
                 report.counterexample_rejected),
    ]
    return payload, samples, verdicts


_RUNNERS = {
    "honest": _run_honest,
    "attack1": _run_attack1,
    "attack2": _run_attack2,
    "phase-error": _run_phase_error,
    "graph-scan": _run_graph_scan,
    "coverage-scan": _run_coverage_scan,
    "verify-appendix-c": _run_verify,
}


def run(config: ExperimentConfig) -> ResultEnvelope:
    """Dispatch the experiment; identical config and seed give identical
    payload bytes for any thread count."""
    start = time.perf_counter()
    try:
        payload, samples, verdicts = _RUNNERS[config.command](config)
    except ParameterError as exc:
        raise UsageError(f"{config.command}: {exc}") from exc
    duration = time.perf_counter() - start
    parameters = {k: v for k, v in config.params.items()}
    return ResultEnvelope(config.command, parameters, config.seed, config.threads,
                          duration, payload, samples, verdicts)


def _summary_lines(envelope: ResultEnvelope) -> list[str]:
    lines = [f"{envelope.command}: seed={envelope.seed} "
             f"duration={envelope.duration_seconds:.2f}s"]
    for key, value in sorted(envelope.payload.items()):
        if isinstance(value, (int, float, bool, str)) and key != "pairing_note":
            lines.append(f"  {key} = {value}")
    for verdict in envelope.verdicts:
        status = "PASS" if verdict["pass"] else "FAIL"
        lines.append(f"  claim: {verdict['claim']}: {status}")
    return lines


def main(argv=None) -> int:
    try:
        config = parse_config(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    envelope = run(config)
    for line in _summary_lines(envelope):
        print(line)
    if config.out is not None:
        try:
            written = emit(envelope, config.fmt, config.out)
            print(f"wrote {written}")
        except OSError as exc:
            # do not lose the results: echo the full envelope before failing
            print(canonical_json(envelope.to_dict()))
            print(f"error: cannot write {config.out}: {exc}", file=sys.stderr)
            return 1
    if config.plot_dir is not None:
        from .plots import render_figures
        for path in render_figures(envelope.to_dict(), config.plot_dir):
            print(f"wrote {path}")
    return 0 if envelope.all_claims_pass else 1


def entrypoint():
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
