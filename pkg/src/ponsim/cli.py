"""
Command-line front end.

    ponsim validate SCENARIO
    ponsim run SCENARIO [--format csv|json|both] [--out DIR] [--seed N]
    ponsim sweep SCENARIO --param dotted.key --values V [V ...] [--out DIR] [--jobs N]

Exit status: 0 success, 1 I/O problem, 2 invalid scenario or usage, 3 the
MAC protocol failed at run time (e.g. an ONT could not be ranged).
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor

from . import __version__
from .olt import RangingError
from .scenario import ScenarioError, scenario_from_dict, with_seed
from .simulation import simulate

EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_PROTOCOL = 0, 1, 2, 3
SEED_ENV = "PONSIM_SEED"

SWEEP_COLUMNS = ("value", "ont_id", "kind", "delivered", "idle", "dropped", "collisions",
                 "mean_latency_ticks", "p95_latency_ticks", "throughput_mbps",
                 "wdm_links_up", "video_receivers_count", "upstream_utilization")

log = logging.getLogger("ponsim")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def write_atomic(path: str, text: str) -> None:
    """Write ``text`` to ``path`` through a temp file in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_document(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise CliError(EXIT_IO, f"cannot read {path}: {e.strerror or e}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise CliError(EXIT_INVALID, f"{path}: invalid JSON ({e})") from None


def parse_scenario(doc):
    try:
        return scenario_from_dict(doc)
    except ScenarioError as e:
        raise CliError(EXIT_INVALID, "invalid scenario:\n  " + "\n  ".join(e.errors)) from None


def resolve_seed(flag):
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env in (None, ""):
        return None
    try:
        seed = int(env)
    except ValueError:
        raise CliError(EXIT_INVALID, f"{SEED_ENV} must be a non-negative integer, "
                                     f"got {env!r}") from None
    if seed < 0:
        raise CliError(EXIT_INVALID, f"{SEED_ENV} must be non-negative")
    return seed


def ensure_dir(path: str) -> None:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise CliError(EXIT_IO, f"cannot create {path}: {e.strerror or e}") from None


def execute(scenario):
    try:
        return simulate(scenario)
    except RangingError as e:
        raise CliError(EXIT_PROTOCOL, f"ranging failed for ONT {e.ont_id}: {e}") from None


def build_report(scenario, result) -> dict:
    return {
        "tool": "ponsim",
        "version": __version__,
        "seed": scenario.seed,
        "scenario": scenario.to_dict(),
        "metrics": result.metrics.to_dict(),
        "trace": {
            "digest": result.trace_digest,
            "events": {k: result.events[k] for k in sorted(result.events)},
            "dispatched": result.dispatched,
            "final_clock_ticks": result.final_clock,
        },
    }


# subcommands

def cmd_validate(args) -> int:
    scenario = parse_scenario(read_document(args.scenario))
    sys.stdout.write(scenario.to_json())
    return EXIT_OK


def cmd_run(args) -> int:
    scenario = parse_scenario(read_document(args.scenario))
    seed = resolve_seed(args.seed)
    if seed is not None:
        scenario = with_seed(scenario, seed)
    result = execute(scenario)
    ensure_dir(args.out)
    written = []
    try:
        if args.format in ("json", "both"):
            written.append(os.path.join(args.out, "metrics.json"))
            write_atomic(written[-1], result.metrics.to_json())
        if args.format in ("csv", "both"):
            written.append(os.path.join(args.out, "metrics.csv"))
            write_atomic(written[-1], result.metrics.to_csv())
        written.append(os.path.join(args.out, "report.json"))
        write_atomic(written[-1], json.dumps(build_report(scenario, result), indent=2,
                                             sort_keys=True) + "\n")
    except OSError as e:
        raise CliError(EXIT_IO, f"cannot write output: {e}") from None
    audit = result.metrics.conservation
    if not audit.passed:
        log.warning("conservation residuals non-zero: %s", audit.residuals)
    for path in written:
        print(path)
    return EXIT_OK


def set_dotted(doc: dict, dotted: str, value) -> None:
    """Assign ``value`` at ``dotted`` (``a.b.0.c``); the existing value must be numeric."""
    parts = dotted.split(".")
    node = doc
    for i, part in enumerate(parts):
        last = i == len(parts) - 1
        if isinstance(node, list):
            try:
                key = int(part)
                node[key]
            except (ValueError, IndexError):
                raise CliError(EXIT_INVALID, f"--param {dotted}: no element {part!r}") from None
        elif isinstance(node, dict):
            key = part
            if key not in node:
                raise CliError(EXIT_INVALID, f"--param {dotted}: no field {part!r} in "
                                             "the scenario file")
        else:
            raise CliError(EXIT_INVALID, f"--param {dotted}: {part!r} is not inside an object")
        if last:
            current = node[key]
            if isinstance(current, bool) or not isinstance(current, (int, float)):
                raise CliError(EXIT_INVALID, f"--param {dotted} is not numeric "
                                             f"(found {type(current).__name__})")
            node[key] = value
        else:
            node = node[key]


def parse_value(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        raise CliError(EXIT_INVALID, f"sweep value {text!r} is not a number") from None


def sweep_rows(value_text: str, metrics) -> list[dict]:
    p = metrics.plant
    rows = []
    for ont_id in sorted(metrics.onts):
        m = metrics.onts[ont_id]
        rows.append({
            "value": value_text,
            "ont_id": ont_id,
            "kind": m.kind,
            "delivered": m.delivered,
            "idle": m.idle,
            "dropped": m.dropped,
            "collisions": m.collisions,
            "mean_latency_ticks": "" if m.mean_latency_ticks is None
            else f"{m.mean_latency_ticks:.3f}",
            "p95_latency_ticks": "" if m.p95_latency_ticks is None else m.p95_latency_ticks,
            "throughput_mbps": f"{m.throughput_mbps:.6f}",
            "wdm_links_up": p.wdm_links_up,
            "video_receivers_count": p.video_receivers_count,
            "upstream_utilization": f"{p.upstream_utilization:.6f}",
        })
    return rows


def cmd_sweep(args) -> int:
    if not args.values:
        raise CliError(EXIT_INVALID, "sweep needs at least one value")
    doc = read_document(args.scenario)
    seed = resolve_seed(args.seed)
    scenarios = []
    for text in args.values:
        patched = copy.deepcopy(doc)
        set_dotted(patched, args.param, parse_value(text))
        if seed is not None:
            patched["seed"] = seed
        scenarios.append((text, parse_scenario(patched)))
    ensure_dir(args.out)
    jobs = max(1, args.jobs)
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        results = list(pool.map(lambda item: execute(item[1]), scenarios))
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for (text, _), result in zip(scenarios, results):
        writer.writerows(sweep_rows(text, result.metrics))
    path = os.path.join(args.out, "sweep.csv")
    try:
        write_atomic(path, buf.getvalue())
    except OSError as e:
        raise CliError(EXIT_IO, f"cannot write output: {e}") from None
    print(path)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(EXIT_INVALID, message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ponsim", description="ATM-PON / WDM-PON discrete-event simulator")
    parser.add_argument("--version", action="version", version=f"ponsim {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="check a scenario and print it with defaults filled")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="simulate one scenario and write metrics")
    p.add_argument("scenario")
    p.add_argument("--format", choices=("csv", "json", "both"), default="both")
    p.add_argument("--out", default=".", help="output directory (default: .)")
    p.add_argument("--seed", type=int, default=None,
                   help=f"override the scenario seed (default: ${SEED_ENV}, then the file)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run one simulation per value of a numeric field")
    p.add_argument("scenario")
    p.add_argument("--param", required=True, help="dotted path, e.g. onts.count")
    p.add_argument("--values", nargs="*", default=[], help="values to substitute")
    p.add_argument("--out", default=".")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1, help="concurrent runs (default 1)")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except CliError as e:
        print(f"ponsim: error: {e}", file=sys.stderr)
        return e.code
