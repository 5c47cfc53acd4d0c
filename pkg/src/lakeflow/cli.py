"""Command line: ``lakeflow {validate,run,inspect,benchmark}``.

Exit codes: ``run`` returns 0 when every entry succeeded, 2 when some entry
failed and 1 on a pipeline-level error.  ``validate`` and ``inspect`` return
0 or 1.  ``benchmark`` returns 1 if data generation fails and 2 if any
scenario reported a failed entry.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import bench
from .engine import run_pipeline
from .errors import FileMissing, LakeflowError, ParseError, PipelineError
from .lake import Lake
from .metadata import CREDENTIALS_ENV, CredentialStore, check_mapping, load_mapping_table
from .table import ColumnType, render_timestamp

log = logging.getLogger("lakeflow")


@dataclass(frozen=True)
class GlobalConfig:
    lake_root: Path | None = None
    source_root: Path | None = None
    mapping_path: Path | None = None
    credentials_path: Path | None = None
    parallelism: int = 1
    verbosity: int = 0
    break_stale_locks: bool = False

    def __post_init__(self):
        for name in ("lake_root", "source_root", "mapping_path", "credentials_path"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, Path(v).expanduser().resolve())
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "GlobalConfig":
        creds = args.credentials or os.environ.get(CREDENTIALS_ENV) or None
        return cls(args.lake, args.sources, args.mapping, creds, args.parallelism or 1,
                   args.verbose, args.break_stale_locks)


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--lake", help="lake root directory")
    common.add_argument("--sources", help="CSV source root directory")
    common.add_argument("--mapping", help="mapping table JSON file")
    common.add_argument("--credentials", help=f"credentials JSON file (default: ${CREDENTIALS_ENV})")
    common.add_argument("--parallelism", type=_positive, default=None)
    common.add_argument("--report", help="write the JSON report here instead of stdout")
    common.add_argument("--break-stale-locks", action="store_true",
                        help="break table locks older than the lock TTL")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="lakeflow", parents=[common])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="check a mapping table")
    sub.add_parser("run", parents=[common], help="ingest every mapping entry")
    ins = sub.add_parser("inspect", parents=[common], help="show a lake table's commit log")
    ins.add_argument("source_name")
    ins.add_argument("table_name")
    ins.add_argument("--watermark", metavar="COL", help="also print max(COL)")
    b = sub.add_parser("benchmark", parents=[common], help="full vs incremental vs hybrid")
    b.add_argument("--sizes", default="1k,10k,100k,1m")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--change-fraction", type=float, default=0.40)
    b.add_argument("--insert-fraction", type=float, default=0.05)
    b.add_argument("--method", choices=("hash", "date"), default="hash",
                   help="incremental method for incremental entries")
    b.add_argument("--out", help="JSON results file")
    b.add_argument("--csv", help="summary CSV (size x scenario)")
    b.add_argument("--scratch", help="directory for generated data and lakes")
    return p


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_validate(cfg: GlobalConfig) -> int:
    if cfg.mapping_path is None:
        print("error: --mapping is required", file=sys.stderr)
        return 1
    try:
        verdicts = check_mapping(cfg.mapping_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        print(f"error: mapping file not found: {cfg.mapping_path}", file=sys.stderr)
        return 1
    except ParseError as e:
        print(f"error: {cfg.mapping_path}:{e.line}: {e.reason}", file=sys.stderr)
        return 1
    for v in verdicts:
        print(f"{v.label}: " + ("ok" if v.ok else "invalid: " + "; ".join(v.problems)))
    bad = sum(not v.ok for v in verdicts)
    print(f"{len(verdicts)} entries, {bad} invalid")
    return 0 if bad == 0 else 1


def cmd_run(cfg: GlobalConfig, report_path: str | None) -> int:
    missing = [f for f, v in (("--lake", cfg.lake_root), ("--sources", cfg.source_root),
                              ("--mapping", cfg.mapping_path)) if v is None]
    if missing:
        print(f"error: {', '.join(missing)} required", file=sys.stderr)
        return 1
    try:
        mapping = load_mapping_table(cfg.mapping_path)
        lake = Lake(cfg.lake_root, break_stale_locks=cfg.break_stale_locks)
        store = CredentialStore(path=cfg.credentials_path)
        reports = run_pipeline(mapping, lake, cfg.source_root, credentials=store,
                               parallelism=cfg.parallelism,
                               count_missing_keys=cfg.verbosity > 0)
    except (FileMissing, ParseError, PipelineError, LakeflowError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    out = [r.to_json(verbose=cfg.verbosity > 0) for r in reports]
    _emit(json.dumps(out, indent=2) + "\n", report_path)
    return 0 if all(r.ok for r in reports) else 2


def cmd_inspect(cfg: GlobalConfig, source: str, table: str, watermark: str | None) -> int:
    if cfg.lake_root is None:
        print("error: --lake is required", file=sys.stderr)
        return 1
    t = Lake(cfg.lake_root).table(source, table)
    try:
        if not t.exists():
            print(f"error: table {source}/{table} not found in {cfg.lake_root}", file=sys.stderr)
            return 1
        records = t.log()
        state = t.state()
        print(f"table: {source}/{table}")
        print(f"version: {state.current_version}")
        print(f"rows: {state.row_count}")
        print(f"schema_fingerprint: {records[-1].schema_fingerprint}")
        for r in records:
            print(f"  v{r.version} {r.operation.value} rows={r.row_count} files={len(r.data_files)}")
        if watermark:
            schema = t.schema()
            if watermark not in schema.names or schema.type_of(watermark) is not ColumnType.TIMESTAMP:
                print(f"error: {watermark!r} is not a timestamp column", file=sys.stderr)
                return 1
            m = t.max_watermark(watermark)
            print(f"max({watermark}): {render_timestamp(m) if m is not None else 'null'}")
    except LakeflowError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


def cmd_benchmark(cfg: GlobalConfig, args: argparse.Namespace) -> int:
    try:
        sizes = [bench.parse_size(s) for s in args.sizes.split(",") if s.strip()]
    except ValueError:
        print(f"error: bad --sizes {args.sizes!r}", file=sys.stderr)
        return 1
    scratch = Path(args.scratch or "bench_scratch").resolve()
    lake = cfg.lake_root or scratch / "lakes"
    try:
        results = bench.run_benchmark(
            sizes, lake, scratch / "data", args.seed, change_fraction=args.change_fraction,
            insert_fraction=args.insert_fraction, incremental_method=args.method,
            parallelism=cfg.parallelism)
    except (OSError, ValueError, RuntimeError, LakeflowError) as e:
        print(f"error: benchmark failed: {e}", file=sys.stderr)
        return 1
    if args.out:
        bench.write_results_json(results, Path(args.out))
    if args.csv:
        bench.write_summary_csv(results, Path(args.csv))
    print(json.dumps(bench.summary_rows(results), indent=2))
    return 2 if any(r.failures for r in results) else 0


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = GlobalConfig.from_args(args)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    if args.command == "validate":
        return cmd_validate(cfg)
    if args.command == "run":
        return cmd_run(cfg, args.report)
    if args.command == "inspect":
        return cmd_inspect(cfg, args.source_name, args.table_name, args.watermark)
    return cmd_benchmark(cfg, args)


if __name__ == "__main__":
    sys.exit(main())
