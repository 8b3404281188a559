"""Command-line entry point.

Verbs::

    caremesh serve --config cfg.json
    caremesh scenario run FILE [--target URL --tokens FILE] [--json OUT]
    caremesh oracle --k N
    caremesh load --experts N --patients M --count C [--mix t1=0.2,...]
                  [--out results.json]

Exit codes: 0 pass, 1 expectation/oracle/criteria failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import signal
import sys
from pathlib import Path

from caremesh import canonical
from caremesh.errors import BindFailure, CoordinationError, CorruptRecord
from caremesh.harness.load import LoadParams, run_load
from caremesh.harness.oracle import run_oracle
from caremesh.harness.scenario import ParseError, load_scenario, ScenarioRunner
from caremesh.harness.targets import HttpTarget, InProcessTarget, TargetError
from caremesh.service import CoordinatorService


def _parse_mix(text: str) -> dict[str, float]:
    mix: dict[str, float] = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise argparse.ArgumentTypeError(f"mix entries look like t1=0.2, got {part!r}")
        key, value = part.split("=", 1)
        try:
            mix[key.strip()] = float(value)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad mix weight {value!r}") from None
    if not mix:
        raise argparse.ArgumentTypeError("empty mix")
    return mix


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="caremesh")
    sub = parser.add_subparsers(dest="verb", required=True)

    serve = sub.add_parser("serve", help="run the coordination API service")
    serve.add_argument("--config", required=True, help="canonical-form config file")

    scenario = sub.add_parser("scenario", help="scripted scenario tools")
    scenario_sub = scenario.add_subparsers(dest="scenario_verb", required=True)
    run = scenario_sub.add_parser("run", help="execute a scenario file")
    run.add_argument("file", help="scenario file path")
    run.add_argument("--target", help="base URL of a running service (default: in-process)")
    run.add_argument("--tokens", help="token table file (required with --target)")
    run.add_argument("--json", dest="json_out", help="write the machine-readable report here")

    oracle = sub.add_parser("oracle", help="exhaustive approval-protocol check")
    oracle.add_argument("--k", type=int, default=4, help="max approvers to enumerate (<= 4)")

    load = sub.add_parser("load", help="drive an in-process coordinator at max throughput")
    load.add_argument("--experts", type=int, required=True)
    load.add_argument("--patients", type=int, required=True)
    load.add_argument("--count", type=int, required=True)
    load.add_argument("--mix", type=_parse_mix, default=None,
                      help="comma list like t1=0.3,t3=0.4,t5=0.3")
    load.add_argument("--circle-experts", type=int, default=5)
    load.add_argument("--seed", type=int, default=7)
    load.add_argument("--out", help="append the report to this results file")
    return parser


def _cmd_serve(args) -> int:
    from caremesh.api.config import ServiceConfig
    from caremesh.api.server import serve

    try:
        config = ServiceConfig.load(args.config)
        server = serve(config)
    except CorruptRecord as exc:
        print(f"LogCorrupt: {exc}", file=sys.stderr)
        return 1
    except (BindFailure, CoordinationError) as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return 1
    print(f"caremesh serving on {server.base_url} (log: {config.log_path})", flush=True)

    def _stop(signum, frame):
        raise KeyboardInterrupt

    signal.signal(signal.SIGTERM, _stop)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        print("shutting down")
    finally:
        server.shutdown()
    return 0


def _cmd_scenario_run(args) -> int:
    path = Path(args.file)
    if not path.exists():
        from caremesh.harness.scenario import bundled_scenario_path

        bundled = bundled_scenario_path(path.stem)
        if bundled.exists():
            path = bundled
    try:
        scenario = load_scenario(path)
    except ParseError as exc:
        print(f"ParseError: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read scenario: {exc}", file=sys.stderr)
        return 2

    if args.target:
        if not args.tokens:
            print("--target needs --tokens", file=sys.stderr)
            return 2
        table = canonical.loads(Path(args.tokens).read_text(encoding="utf-8"))
        target = HttpTarget(args.target, {pid: tok for tok, pid in table.items()})
    else:
        target = InProcessTarget(CoordinatorService(snapshots=False))

    try:
        report = ScenarioRunner(scenario, target).run()
    except TargetError as exc:
        print(f"TargetUnreachable: {exc}", file=sys.stderr)
        return 2
    finally:
        target.close()

    for outcome in report.outcomes + report.audits:
        mark = "ok " if outcome.ok else "FAIL"
        detail = f"  ({outcome.detail})" if outcome.detail else ""
        print(f"[{mark}] t={outcome.at} {outcome.description}{detail}")
    print(f"digest: {report.digest}")
    if args.json_out:
        Path(args.json_out).write_text(
            canonical.dumps(report.to_public()) + "\n", encoding="utf-8"
        )
    print("PASS" if report.passed else "FAIL")
    return 0 if report.passed else 1


def _cmd_oracle(args) -> int:
    if not 1 <= args.k <= 4:
        print("--k must be between 1 and 4", file=sys.stderr)
        return 2
    report = run_oracle(args.k)
    for k, cases in sorted(report.cases_by_k.items()):
        print(f"k={k}: {cases} cases")
    print(f"total cases: {report.total_cases}, mismatches: {len(report.mismatches)}")
    for line in report.mismatches[:20]:
        print(f"  MISMATCH {line}")
    print("PASS" if report.passed else "FAIL")
    return 0 if report.passed else 1


def _cmd_load(args) -> int:
    params = LoadParams(
        experts=args.experts,
        patients=args.patients,
        count=args.count,
        circle_experts=args.circle_experts,
        seed=args.seed,
    )
    if args.mix is not None:
        params.mix = args.mix
    try:
        report = run_load(params)
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    lat = report["latency_ms"]
    print(
        f"{report['participants']} participants, {report['commands']} commands, "
        f"{report['deliveries']} deliveries in {report['elapsed_s']}s "
        f"({report['throughput_cps']} cmd/s)"
    )
    print(
        f"enqueue-to-subscriber latency ms: p50={lat['p50']} p95={lat['p95']} "
        f"p99={lat['p99']} max={lat['max']} over {lat['samples']} samples"
    )
    print(f"lost deliveries: {report['lost']}")
    if args.out:
        out_path = Path(args.out)
        existing = {"results": []}
        if out_path.exists():
            try:
                existing = canonical.loads(out_path.read_text(encoding="utf-8"))
            except ValueError:
                existing = {"results": []}
        existing.setdefault("results", []).append(report)
        out_path.write_text(canonical.dumps(existing) + "\n", encoding="utf-8")
    return 0 if report["lost"] == 0 else 1


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.verb == "serve":
        return _cmd_serve(args)
    if args.verb == "scenario":
        return _cmd_scenario_run(args)
    if args.verb == "oracle":
        return _cmd_oracle(args)
    if args.verb == "load":
        return _cmd_load(args)
    return 2


if __name__ == "__main__":
    sys.exit(main())
