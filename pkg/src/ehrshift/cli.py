"""Command line: generate, run, report, run-all.

Exit codes:
  0  success
  1  unexpected internal error
  2  invalid command line (argparse usage error)
  3  invalid configuration
  4  missing or malformed input data, or an I/O failure
  5  run finished but at least one evaluation cell failed with an error
  6  metrics.csv could not be parsed (report)
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

import yaml

from . import __version__
from .cohort import load_dataset
from .config import RunConfig, config_to_yaml, load_config
from .errors import ConfigError, SchemaError

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_CELL_ERRORS = 5
EXIT_METRICS = 6

log = logging.getLogger("ehrshift")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _out_dir(args, cfg: RunConfig | None) -> Path:
    if args.out is not None:
        return Path(args.out)
    if cfg is not None and cfg.output_dir is not None:
        return cfg.output_dir
    raise CliError(EXIT_CONFIG, "no output directory: pass --out or set output_dir in the config")


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


def dataset_summary(data, cohort) -> str:
    from .datagen import summarize
    from .evaluate.runner import prepare
    from .represent.tensors import build_aggregate

    lines = ["year  n_stays  mortality  long_los"]
    for year, row in summarize(data).iterrows():
        lines.append(f"{year}  {int(row.n_stays):7d}  {row.mortality:9.3f}  {row.long_los:8.3f}")
    prep = prepare(data, cohort)
    lines.append(f"cohort stays: {len(prep.stays)}")
    lines.append(f"missingness raw: {prep.raw.missing_rate():.4f}")
    if data.agg_map is not None:
        lines.append(f"missingness aggregate: {build_aggregate(prep.raw, data.agg_map).missing_rate():.4f}")
    return "\n".join(lines)


def cmd_generate(args) -> int:
    from .datagen import emit_dataset, generate

    cfg = _config(args)
    if cfg.scenario is None:
        raise CliError(EXIT_CONFIG, "config points at external data (data.dir); nothing to generate")
    out = _out_dir(args, cfg)
    data = generate(cfg.scenario)
    emit_dataset(data, out / "data")
    _write(out / "scenario.yaml", yaml.safe_dump(cfg.scenario.to_dict(), sort_keys=True))
    _say(args, f"wrote {out / 'data'}")
    _say(args, dataset_summary(data, cfg.cohort))
    return EXIT_OK


def _data_dir(cfg: RunConfig, out: Path) -> Path:
    d = cfg.data_dir if cfg.data_dir is not None else out / "data"
    missing = [n for n in ("events", "stays", "items") if not (d / f"{n}.csv").is_file()]
    if missing:
        raise CliError(EXIT_DATA, f"dataset files missing in {d}: {', '.join(f'{m}.csv' for m in missing)}"
                                  " (run 'generate' first or set data.dir)")
    return d


def cmd_run(args) -> int:
    from .evaluate.runner import build_reports, metrics_csv, prepare, run_grid, summary_csv

    cfg = _config(args)
    out = _out_dir(args, cfg)
    data = load_dataset(_data_dir(cfg, out))
    prep = prepare(data, cfg.cohort)
    jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)
    start = time.monotonic()

    def progress(i, n, unit):
        if not args.quiet:
            print(f"[{i}/{n}] {'/'.join(unit.key)}", file=sys.stderr)

    rows, _ = run_grid(prep, cfg.settings, jobs=jobs, progress=progress)
    _write(out / "metrics.csv", metrics_csv(rows))
    _write(out / "summary.csv", summary_csv(build_reports(rows)))
    _write(out / "run.yaml", config_to_yaml(cfg))
    errors = [r for r in rows if r.flag.startswith("error")]
    _say(args, f"wrote {out / 'metrics.csv'} ({len(rows)} rows) in {time.monotonic() - start:.0f}s")
    if errors:
        print(f"{len(errors)} evaluation cell(s) failed; see flags in metrics.csv", file=sys.stderr)
        return EXIT_CELL_ERRORS
    return EXIT_OK


def _run_meta(out: Path) -> tuple[int | None, int | None]:
    """(switch_year, n_boot) recorded by 'run', when available."""
    path = out / "run.yaml"
    if not path.is_file():
        return None, None
    doc = yaml.safe_load(path.read_text()) or {}
    scenario = (doc.get("data") or {}).get("scenario") or {}
    switch = scenario.get("switch_year") if scenario.get("full_switch", True) else None
    return switch, (doc.get("evaluation") or {}).get("n_boot")


def cmd_report(args) -> int:
    from .evaluate.runner import read_metrics
    from .report import render_all

    cfg = _config(args) if args.config else None
    out = _out_dir(args, cfg)
    path = out / "metrics.csv"
    if not path.is_file():
        raise CliError(EXIT_DATA, f"{path} not found (run 'run' first)")
    try:
        rows = read_metrics(path)
    except SchemaError as e:
        raise CliError(EXIT_METRICS, str(e)) from None
    switch, n_boot = _run_meta(out)
    for name, text in render_all(rows, switch, n_boot).items():
        _write(out / "report" / name, text)
    _say(args, f"wrote {out / 'report'}")
    return EXIT_OK


def cmd_run_all(args) -> int:
    cfg = _config(args)
    if cfg.scenario is not None:
        cmd_generate(args)
    code = cmd_run(args)
    report_code = cmd_report(args)
    return code or report_code


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--out", help="output directory (overrides output_dir in the config)")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--jobs", type=int, help="parallel workers for 'run' (default: CPU count)")
    common.add_argument("--quiet", action="store_true", help="only print errors")

    parser = argparse.ArgumentParser(prog="ehrshift", description=__doc__.split("\n")[0],
                                     epilog=__doc__.split("\n", 2)[2],
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"ehrshift {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, help_ in (("generate", cmd_generate, "write a synthetic dataset and print its summary"),
                            ("run", cmd_run, "evaluate the configured grid; writes metrics.csv and summary.csv"),
                            ("report", cmd_report, "render SVG figures and tables from metrics.csv"),
                            ("run-all", cmd_run_all, "generate (if synthetic), run, then report")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs is not None and args.jobs < 1:
        parser.error("--jobs must be >= 1")
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SchemaError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception:  # noqa: BLE001 - last resort, keeps the documented exit status
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
