"""Command line: local solves, pricing workers, model conversion and the HTTP service.

``dwmap solve`` runs in-process. ``dwmap submit`` is a thin client that
sends the same request to a running ``dwmap serve``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from dwmap.baselines import StateSpaceTooLarge
from dwmap.decomposition import TIE_RULES, DWConfig
from dwmap.formats import ModelFormatError, dumps_native, emit_trace, model_to_dict, read_model
from dwmap.model import GraphError
from dwmap.relaxation import RelaxationError
from dwmap.rounding import RoundingError
from dwmap.runtime import Coordinator, ThreadPricer, default_workers, run_worker
from dwmap.runtime.remote import RemoteError
from dwmap.sideconstraints import InjectiveConstraint, SideConstraintError
from dwmap.solve import BACKENDS, SolveError, solve

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INPUT = 2
EXIT_BACKEND = 3

log = logging.getLogger("dwmap")


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("model", type=Path, help="UAI MARKOV file or native JSON model")
    p.add_argument("--format", choices=("auto", "uai", "native"), default="auto")
    p.add_argument("--log-domain", type=_bool, default=True, metavar="BOOL",
                   help="UAI tables are log scores (true) or nonnegative factors (false)")
    p.add_argument("--backend", choices=BACKENDS, default="dw")
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--columns-per-iter", type=int, default=200)
    p.add_argument("--purge-after-seconds", type=float, default=None)
    p.add_argument("--tie-rule", choices=TIE_RULES, default="lowest-index")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--round", dest="round_eps", type=float, default=1e-6, metavar="EPS",
                   help="marginal entries above EPS count as surviving states")
    p.add_argument("--damping", type=float, default=0.0, help="max-product message damping")
    p.add_argument("--constraint", action="append", choices=("injective",), default=[],
                   help="add a side constraint over all nodes")
    p.add_argument("--outlier-state", type=int, default=None,
                   help="0-based state exempt from the injective constraint")
    p.add_argument("--output", type=Path, default=None, help="write the result record here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dwmap", description="MAP inference by column generation over edges")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a model in this process")
    _add_solver_flags(p)
    p.add_argument("--workers", type=int, default=None, help="pricing threads [number of cores]")
    p.add_argument("--listen", default=None, metavar="HOST:PORT", help="price on remote workers connecting here")
    p.add_argument("--remote-workers", type=int, default=1, help="workers to wait for with --listen")
    p.add_argument("--accept-timeout", type=float, default=60.0)
    p.add_argument("--trace", type=Path, default=None, help="per-iteration records (JSON lines)")

    p = sub.add_parser("worker", help="serve pricing requests for a coordinator")
    p.add_argument("--connect", required=True, metavar="HOST:PORT")
    p.add_argument("--name", default="worker")
    p.add_argument("--timeout", type=float, default=30.0, help="connection timeout in seconds")

    p = sub.add_parser("convert", help="rewrite a model in the native JSON format")
    p.add_argument("model", type=Path)
    p.add_argument("output", type=Path)
    p.add_argument("--format", choices=("auto", "uai", "native"), default="auto")
    p.add_argument("--log-domain", type=_bool, default=True, metavar="BOOL")
    p.add_argument("--constraint", action="append", choices=("injective",), default=[])
    p.add_argument("--outlier-state", type=int, default=None)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    p = sub.add_parser("submit", help="send a solve request to a running service")
    _add_solver_flags(p)
    p.add_argument("--server", default="http://127.0.0.1:8000")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timeout", type=float, default=600.0)
    return parser


def _load(args) -> tuple:
    g, constraints = read_model(args.model, args.format, args.log_domain)
    for kind in args.constraint:
        if kind == "injective":
            constraints.append(InjectiveConstraint(None, args.outlier_state))
    return g, constraints


def _config(args) -> DWConfig:
    return DWConfig(
        max_iters=args.max_iters,
        columns_per_iter=args.columns_per_iter,
        purge_after_seconds=args.purge_after_seconds,
        tie_rule=args.tie_rule,
        tol=args.tol,
        round_eps=args.round_eps,
    )


def _write_record(record: dict, output: Path | None) -> None:
    text = json.dumps(record)
    if output is None:
        print(text)
    else:
        output.write_text(text + "\n")


def cmd_solve(args) -> int:
    g, constraints = _load(args)
    coordinator = Coordinator(args.listen) if args.listen else None
    if coordinator is not None:
        host, port = coordinator.address
        log.info("waiting for %d worker(s) on %s:%d", args.remote_workers, host, port)
        factory = lambda subs: coordinator.pricer(subs, args.remote_workers, args.accept_timeout)  # noqa: E731
    else:
        workers = args.workers or default_workers()
        factory = (lambda subs: ThreadPricer(subs, workers)) if workers > 1 else None
    try:
        result = solve(g, args.backend, constraints, _config(args), factory, damping=args.damping)
    finally:
        if coordinator is not None:
            coordinator.close()
    if args.trace is not None:
        with args.trace.open("w") as fh:
            emit_trace(result.trace, fh)
    _write_record(result.record(), args.output)
    return EXIT_OK


def cmd_worker(args) -> int:
    served = run_worker(args.connect, args.name, args.timeout)
    log.info("worker %s answered %d requests", args.name, served)
    return EXIT_OK


def cmd_convert(args) -> int:
    g, constraints = _load(args)
    args.output.write_text(dumps_native(g, constraints) + "\n")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("dwmap.service.app:app", host=args.host, port=args.port)
    return EXIT_OK


def cmd_submit(args) -> int:
    import httpx

    g, constraints = _load(args)
    options = {
        "backend": args.backend,
        "max_iters": args.max_iters,
        "columns_per_iter": args.columns_per_iter,
        "purge_after_seconds": args.purge_after_seconds,
        "tie_rule": args.tie_rule,
        "tol": args.tol,
        "round_eps": args.round_eps,
        "workers": args.workers,
        "damping": args.damping,
    }
    body = {"model": model_to_dict(g, constraints), "options": options}
    resp = httpx.post(args.server.rstrip("/") + "/solve", json=body, timeout=args.timeout)
    if resp.status_code != 200:
        print(f"error: server answered {resp.status_code}: {resp.text}", file=sys.stderr)
        return EXIT_INPUT if resp.status_code == 422 else EXIT_BACKEND
    record = resp.json()
    record.pop("trace", None)
    _write_record(record, args.output)
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "worker": cmd_worker,
    "convert": cmd_convert,
    "serve": cmd_serve,
    "submit": cmd_submit,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (OSError, ModelFormatError, GraphError, SideConstraintError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolveError, StateSpaceTooLarge, RelaxationError, RoundingError, RemoteError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
