"""Command-line entry point.

    rangequant quantize --manifest m.json --bits 4 --strategy requant --out out/
    rangequant compare-searches --manifest m.json --bits 8 --layer conv1
    rangequant report --input out/report.json --format csv

Exit status: 0 on success, 2 for usage errors (bad flags, bit-width out of
range, unreadable manifest), 1 for failures during processing.  Errors are
printed to stderr as one JSON line.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import storage
from .pipeline import EMIT_CHOICES, STRATEGY_ALIASES, PipelineConfig, compare_searches, dequantize_tensor, quantize_model
from .search import METHODS, SearchAbortedError, SearchSettings
from .tensors import MAX_BITS, MIN_BITS, STRATEGIES, InvalidInputError

COMPARE_COLUMNS = ("layer", "method", "alpha", "loss", "time_ms")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _bits(text: str) -> int:
    try:
        b = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bit-width must be an integer, got {text!r}")
    if not MIN_BITS <= b <= MAX_BITS:
        raise argparse.ArgumentTypeError(f"bit-width must be in [{MIN_BITS}, {MAX_BITS}], got {b}")
    return b


def _emit(text: str) -> frozenset:
    items = frozenset(s.strip() for s in text.split(",") if s.strip())
    unknown = items - EMIT_CHOICES
    if unknown:
        raise argparse.ArgumentTypeError(f"unknown emit items {sorted(unknown)}; choose from {sorted(EMIT_CHOICES)}")
    return items


def _add_search_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=float, default=1e-4)
    p.add_argument("--phi", type=float, default=0.618)
    p.add_argument("--alpha-min", type=float, default=1e-3)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rangequant", description="Per-tensor clipping search for weight quantization.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    q = sub.add_parser("quantize", help="quantize every tensor of a manifest")
    q.add_argument("--manifest", required=True, type=Path)
    q.add_argument("--bits", required=True, type=_bits)
    q.add_argument("--strategy", default="requant", choices=sorted(STRATEGY_ALIASES) + list(STRATEGIES))
    q.add_argument("--method", default="golden", choices=METHODS)
    q.add_argument("--first-last-bits", type=_bits, default=8)
    _add_search_flags(q)
    q.add_argument("--out", required=True, type=Path)
    q.add_argument("--emit", type=_emit, default=EMIT_CHOICES, help="comma list of codes,fake,report")
    q.add_argument("--workers", type=int, default=1)

    c = sub.add_parser("compare-searches", help="run golden, bisection and Nelder-Mead on one layer")
    c.add_argument("--manifest", required=True, type=Path)
    c.add_argument("--bits", required=True, type=_bits)
    c.add_argument("--layer", required=True)
    _add_search_flags(c)
    c.add_argument("--format", choices=("csv", "json"), default="csv")

    r = sub.add_parser("report", help="print a saved report as JSON or CSV")
    r.add_argument("--input", required=True, type=Path)
    r.add_argument("--format", choices=("csv", "json"), default="json")
    return parser


def _settings(args, method: str = "golden") -> SearchSettings:
    try:
        return SearchSettings(epsilon=args.epsilon, phi=args.phi, alpha_min=args.alpha_min, method=method)
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from exc


def _load(manifest: Path):
    try:
        return storage.load_model(manifest)
    except storage.ManifestError as exc:
        if exc.code == "unreadable-manifest":
            raise UsageError(str(exc)) from exc
        raise


def cmd_quantize(args, out) -> None:
    try:
        config = PipelineConfig(
            bits_weights=args.bits,
            strategy=args.strategy,
            search=_settings(args, args.method),
            first_last_bits=args.first_last_bits,
            emit=args.emit,
            workers=args.workers,
        )
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from exc
    tensors = _load(args.manifest)
    quantized, reports = quantize_model(tensors, config)

    args.out.mkdir(parents=True, exist_ok=True)
    if "codes" in config.emit or "fake" in config.emit:
        fake = [dequantize_tensor(q) for q in quantized] if "fake" in config.emit else None
        if "codes" in config.emit:
            storage.save_quantized(args.out, quantized, fake)
        else:
            storage.save_model(args.out, fake, manifest_name="fake_manifest.json")
    report_path = args.out / "report.json"
    storage.write_report(report_path, storage.build_report(config, reports))
    print(json.dumps({"status": "ok", "layers": len(reports), "report": str(report_path)}), file=out)


def cmd_compare(args, out) -> None:
    tensors = _load(args.manifest)
    by_name = {t.name: t for t in tensors}
    if args.layer not in by_name:
        raise UsageError(f"layer {args.layer!r} not in manifest; available: {list(by_name)}")
    rows = [r.as_row() for r in compare_searches(by_name[args.layer], args.bits, _settings(args))]
    if args.format == "json":
        out.write(json.dumps(rows, sort_keys=True, indent=2) + "\n")
    else:
        out.write(storage.rows_csv(rows, COMPARE_COLUMNS))


def cmd_report(args, out) -> None:
    try:
        doc = storage.read_report(args.input)
    except storage.ManifestError as exc:
        raise UsageError(str(exc)) from exc
    if args.format == "json":
        out.write(storage.report_json(doc))
    else:
        out.write(storage.rows_csv(doc["layers"]))


COMMANDS = {"quantize": cmd_quantize, "compare-searches": cmd_compare, "report": cmd_report}


def _fail(kind: str, message: str, status: int, **extra) -> int:
    print(json.dumps({"error": kind, "message": message, **extra}, sort_keys=True), file=sys.stderr)
    return status


def main(argv=None, out=None) -> int:
    out = out if out is not None else sys.stdout
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args, out)
    except UsageError as exc:
        return _fail("usage", str(exc), 2)
    except storage.ManifestError as exc:
        return _fail(exc.code, str(exc), 1, tensor=exc.tensor)
    except SearchAbortedError as exc:
        return _fail("search-aborted", str(exc), 1, alpha=exc.alpha)
    except (InvalidInputError, OSError) as exc:
        return _fail("processing", str(exc), 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
