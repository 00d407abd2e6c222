"""Command-line front door: every harness operation behind one dispatcher.

Machine output (JSON) goes to stdout only when no --out path is given; human
summaries go to stderr.  Exit codes: 0 all checks passed, 1 an invariant flag
failed, 2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import harness, theory


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="factorflow",
        description="Simulate deep matrix-factorization gradient descent and "
                    "evaluate its closed-form convergence/effective-rank predictions.",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    specs = {
        "simulate": "run a scenario config and emit the per-step report",
        "predict": "evaluate convergence-time bundles for (lambda, epsilon, ...) points",
        "plateau": "compute effective-rank plateau windows and bounds",
        "sweep": "bracket empirical hit times between the two-sided bounds",
        "denoise": "low-rank denoising experiment with early-stopping dip",
        "diverge": "probe divergence/instability thresholds",
        "randinit": "random scaled-identity initialization batch",
    }
    for name, help_text in specs.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="path to a JSON config file")
        p.add_argument("--out", help="output path (stdout JSON if omitted)")
        p.add_argument("--format", choices=("csv", "json"), default="json",
                       help="output format (default json)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry (dotted keys allowed)")
    return parser


def _load_config(path: str | None, overrides: list[str]) -> dict:
    raw = {}
    if path:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise harness.ConfigError([f"config {path}: {exc}"])
    for item in overrides:
        if "=" not in item:
            raise harness.ConfigError([f"--set expects KEY=VALUE, got {item!r}"])
        key, _, value = item.partition("=")
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        node = raw
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = parsed
    return raw


def _deliver(report: harness.Report, args) -> None:
    if args.out:
        harness.emit(report, args.format, args.out)
        print(f"wrote {args.format} report to {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(json.dumps(report.to_dict(), indent=1) + "\n")


def _predict(raw: dict) -> list[dict]:
    def listify(x):
        return x if isinstance(x, list) else [x]

    required = [k for k in ("lambda", "epsilon", "alpha", "eta", "depth") if k not in raw]
    if required:
        raise harness.ConfigError([f"predict: missing {k}" for k in required])
    out = []
    for lam in listify(raw["lambda"]):
        for eps in listify(raw["epsilon"]):
            try:
                if raw.get("beta") is not None:
                    bundle = theory.t_perturbed(lam, eps, raw["alpha"], raw["beta"],
                                                raw["eta"], raw["depth"])
                else:
                    bundle = theory.t_identical(lam, eps, raw["alpha"], raw["eta"],
                                                raw["depth"])
                out.append(bundle.to_dict())
            except theory.TheoryError as exc:
                out.append({"lambda": lam, "epsilon": eps, "error": str(exc)})
    return out


def _plateau(raw: dict) -> harness.Report:
    for key in ("spectrum", "L"):
        if key not in raw:
            raise harness.ConfigError([f"plateau: missing {key}"])
    cfgish = harness.ScenarioConfig(spectrum=raw["spectrum"], depth=raw.get("depth", 2),
                                    init=None, eta=raw.get("eta", 0.0))
    w = cfgish.spectrum_values()
    ranks = raw["L"] if isinstance(raw["L"], list) else [raw["L"]]
    mode = raw.get("mode", "flow")
    windows = []
    flags = {}
    for rank in ranks:
        try:
            if mode in ("flow", "both"):
                win = theory.flow_plateau(w, rank, epsilon=raw["epsilon"],
                                          big_c=raw["C"], alpha=raw["alpha"])
                windows.append(win.to_dict())
            if mode in ("gd", "both"):
                win = theory.gd_plateau(w, rank, epsilon=raw["epsilon"],
                                        epsilon_prime=raw["epsilon_prime"],
                                        alpha=raw["alpha"], eta=raw["eta"],
                                        depth=raw.get("depth", 2))
                windows.append(win.to_dict())
        except KeyError as exc:
            raise harness.ConfigError([f"plateau: missing {exc.args[0]}"])
        except theory.TheoryError as exc:
            raise harness.ConfigError([f"plateau L={rank}: {exc}"])
    columns = ["rank", "flow_bound", "gd_bound"]
    records = [[w_["rank"], w_.get("flow_bound"), w_.get("gd_bound")] for w_ in windows]
    return harness.Report(config=raw, columns=columns, records=records,
                          windows=windows, flags=flags)


def dispatch(argv: list[str]) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 2
    try:
        raw = _load_config(args.config, args.set)
        if args.command == "simulate":
            report = harness.run_scenario(harness.config_from_dict(raw))
        elif args.command == "predict":
            bundles = _predict(raw)
            payload = json.dumps(bundles, indent=1) + "\n"
            if args.out:
                with open(args.out, "w") as fh:
                    fh.write(payload)
            else:
                sys.stdout.write(payload)
            return 0
        elif args.command == "plateau":
            report = _plateau(raw)
        elif args.command == "sweep":
            report = harness.sweep_report(raw or None)
        elif args.command == "denoise":
            report = harness.denoise_experiment(harness.config_from_dict(raw))
        elif args.command == "diverge":
            report = harness.divergence_probe(raw.get("grid"))
        elif args.command == "randinit":
            report = harness.random_init_experiment(harness.config_from_dict(raw),
                                                    seeds=raw.get("seeds"))
        else:  # pragma: no cover - argparse rejects unknown commands
            return 2
    except harness.ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return 2
    _deliver(report, args)
    if not report.all_pass():
        failing = [k for k, v in report.flags.items() if not v]
        print(f"invariant failures: {', '.join(failing)}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))
