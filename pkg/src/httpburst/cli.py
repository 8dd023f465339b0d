"""Command-line entry point: serve, fetch, extract, bench and model."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence
from urllib.parse import urlsplit

from . import __version__, bench, model
from .client import FetchError, FetchPlan, ObjectCache, fetch_page
from .html_extract import extract_manifest
from .server import ServerConfig, serve
from .wire import PROTOCOL_REVISION

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _modes(text: str) -> list[tuple[str, int]]:
    out = []
    for item in text.split(","):
        mode, _, c = item.strip().partition(":")
        if mode not in ("get", "burst") or not c.isdigit() or int(c) < 1:
            raise argparse.ArgumentTypeError(f"bad mode {item!r}; expected get:C or burst:C")
        out.append((mode, int(c)))
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="httpburst", description=__doc__)
    parser.add_argument(
        "--version",
        action="version",
        version=f"httpburst {__version__} (BURST wire revision {PROTOCOL_REVISION})",
    )
    parser.add_argument("--log-level", default="warning", choices=["debug", "info", "warning", "error"])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("serve", help="serve a directory over GET and BURST")
    p.add_argument("--root", required=True, type=Path)
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--delay-ms", type=float, default=0.0, help="processing delay per request")
    p.add_argument("--per-object-delay", action="store_true", help="charge the delay per BURST part")
    p.add_argument("--max-burst", type=int, default=512)
    p.add_argument("--max-connections", type=int, default=64)

    p = sub.add_parser("fetch", help="load a page and its inlined objects")
    p.add_argument("url")
    p.add_argument("--mode", choices=["get", "burst"], default="burst")
    p.add_argument("--connections", type=int, default=6)
    p.add_argument("--cache-dir", type=Path)
    p.add_argument("--timing", action="store_true", help="also print request and byte counts")
    p.add_argument("--timeout", type=float, default=60.0)

    p = sub.add_parser("extract", help="list the inlined objects of an HTML file")
    p.add_argument("file", type=Path)
    p.add_argument("--base", help="server path of the document (default: /<filename>)")

    p = sub.add_parser("bench", help="GET vs BURST page-load benchmark")
    p.add_argument("--n", type=_int_list, default=[1, 10, 25, 50, 100, 150])
    p.add_argument("--modes", type=_modes, default=[("get", 6), ("burst", 1), ("burst", 6)])
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--delay-ms", type=float, default=20.0)
    p.add_argument("--image-kb", type=float, default=30.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)
    p.add_argument("--model-only", action="store_true", help="emit the analytic efficiency sweep instead")

    p = sub.add_parser("model", help="analytic efficiency sweep as CSV")
    _model_args(p)
    return parser


def _model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--payload", type=float, default=1400)
    p.add_argument("--max-n", type=int, default=150)
    p.add_argument("--c", type=_int_list, default=[1, 6])
    p.add_argument("--ip", type=int, default=20)
    p.add_argument("--tcp", type=int, default=20)
    p.add_argument("--http", type=int, default=0)


def _cmd_serve(args) -> int:
    config = ServerConfig(
        args.root,
        port=args.port,
        host=args.host,
        processing_delay=args.delay_ms / 1000.0,
        per_object_delay=args.per_object_delay,
        max_burst_paths=args.max_burst,
        max_connections=args.max_connections,
    )

    def ready(server) -> None:
        print(f"serving {config.docroot} on http://{config.host}:{server.port}/", file=sys.stderr, flush=True)

    serve(config, on_ready=ready)
    return EXIT_OK


def _cmd_fetch(args) -> int:
    url = urlsplit(args.url)
    if url.scheme != "http" or not url.hostname:
        raise UsageError(f"expected an http:// URL, got {args.url!r}")
    page = url.path or "/"
    plan = FetchPlan(page, args.mode, args.connections, url.hostname, url.port or 80, args.timeout)
    cache = ObjectCache(args.cache_dir) if args.cache_dir else ObjectCache()
    result = fetch_page(plan, cache)
    out = sys.stdout
    for path in result.manifest:
        status = result.statuses.get(path, 0)
        tag = " cached" if path in result.from_cache else ""
        out.write(f"{status} {path} {len(result.objects.get(path, b''))}{tag}\n")
    out.write(f"total_duration_ms={result.total_duration * 1000:.3f}\n")
    if args.timing:
        out.write(f"request_count={result.request_count}\n")
        out.write(f"bytes_on_wire={result.bytes_on_wire}\n")
    return EXIT_OK


def _cmd_extract(args) -> int:
    base = args.base or "/" + args.file.name
    manifest = extract_manifest(args.file.read_bytes(), base)
    for path in manifest:
        sys.stdout.write(path + "\n")
    return EXIT_OK


def _sweep(args) -> str:
    params = model.OverheadParams(args.ip, args.tcp, args.http)
    return model.sweep_csv(model.efficiency_sweep(args.payload, args.max_n, params, args.c))


def _cmd_model(args) -> int:
    sys.stdout.write(_sweep(args))
    return EXIT_OK


def _cmd_bench(args) -> int:
    if args.model_only:
        args.payload, args.max_n, args.c = 1400, 150, [1, 6]
        args.ip, args.tcp, args.http = 20, 20, 0
        text = _sweep(args)
    else:
        config = bench.ExperimentConfig(
            image_counts=args.n,
            modes=args.modes,
            runs_per_point=args.runs,
            image_size=int(args.image_kb * 1024),
            processing_delay=args.delay_ms / 1000.0,
            seed=args.seed,
        )
        stats = bench.run_experiment(config)
        text = bench.summarize(stats)
        _report_improvements(stats)
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _report_improvements(stats: list[bench.RunStats]) -> None:
    by_n: dict[int, dict[tuple[str, int], bench.RunStats]] = {}
    for s in stats:
        by_n.setdefault(s.n_images, {})[(s.mode, s.connections)] = s
    for n, points in by_n.items():
        gets = [s for (m, _), s in points.items() if m == "get" and not s.failed]
        if not gets:
            continue
        base = min(gets, key=lambda s: s.mean)
        for (m, c), s in sorted(points.items()):
            if m == "burst" and not s.failed:
                print(
                    f"N={n} burst@{c} vs get@{base.connections}: "
                    f"{bench.improvement(base.mean, s.mean) * 100:.1f}% faster",
                    file=sys.stderr,
                )


COMMANDS = {
    "serve": _cmd_serve,
    "fetch": _cmd_fetch,
    "extract": _cmd_extract,
    "bench": _cmd_bench,
    "model": _cmd_model,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=args.log_level.upper(), stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"httpburst: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FetchError, OSError, ValueError) as exc:
        print(f"httpburst {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
