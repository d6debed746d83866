"""Command-line entry point.

Exit codes: 0 when every asserted check passes, 1 when a bound report
fails dominance (outputs are still written), 2 for usage errors, 3 for I/O
failures.
"""

from __future__ import annotations

import argparse
import inspect
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import tomli

from . import experiments, trials

log = logging.getLogger("frechetlab")

STUDY_NAMES = tuple(experiments.STUDIES) + ("all",)
OUT_ENV = "FRECHETLAB_OUT"
CONFIG_KEYS = {"study", "seed", "trials", "out", "threads", "params"}
EXIT_OK, EXIT_FAILED_CHECK, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    study: str
    seed: int = 42
    trials: Optional[int] = None
    out_dir: Path = Path("runs")
    params: dict = field(default_factory=dict)
    threads: Optional[int] = None


def study_param_names(study: str) -> set:
    sig = inspect.signature(experiments.STUDIES[study])
    return {p for p in sig.parameters if p not in ("out", "streams", "trials", "seed")}


def _validate_params(params: dict) -> dict:
    if not isinstance(params, dict):
        raise UsageError("[params] must be a table of per-study tables")
    for study, table in params.items():
        if study not in experiments.STUDIES:
            raise UsageError(f"unknown study {study!r} in [params]; valid: {', '.join(experiments.STUDIES)}")
        if not isinstance(table, dict):
            raise UsageError(f"[params.{study}] must be a table")
        unknown = set(table) - study_param_names(study)
        if unknown:
            raise UsageError(f"unknown parameter(s) for {study}: {', '.join(sorted(unknown))}")
    return params


def load_config_file(path) -> dict:
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise UsageError(f"malformed config file {path}: {exc}") from exc
    unknown = set(data) - CONFIG_KEYS
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    return data


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def _seed(text):
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}")
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    studies = "\n".join(f"  {name:<9} {experiments.STUDY_HELP[name]}" for name in STUDY_NAMES)
    p = argparse.ArgumentParser(
        prog="frechetlab",
        description="Run Frechet-mean / point-process validation studies and write CSV/JSON outputs.",
        epilog=f"studies:\n{studies}\n\nexit codes: 0 ok, 1 a dominance check failed, 2 usage error, 3 I/O error",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--study", help="study to run (see list below)")
    p.add_argument("--seed", type=_seed, help="root 64-bit seed (default 42)")
    p.add_argument("--trials", type=_positive_int, help="override every study's trial count")
    p.add_argument("--out", help=f"output root (default ${OUT_ENV} or ./runs)")
    p.add_argument("--config", help="TOML file with study/seed/trials/out/threads and [params.<study>] tables")
    p.add_argument("--threads", type=_positive_int, help="cap on worker threads (default: all cores)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def parse_args(argv=None) -> RunConfig:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        file_cfg = load_config_file(args.config) if args.config else {}
        params = _validate_params(file_cfg.get("params", {}))
    except UsageError as exc:
        parser.error(str(exc))
    study = args.study if args.study is not None else file_cfg.get("study")
    if study is None:
        parser.error("--study is required")
    if study not in STUDY_NAMES:
        parser.error(f"invalid study {study!r}; valid studies: {', '.join(STUDY_NAMES)}")

    def pick(flag, key, default, conv):
        if flag is not None:
            return flag
        if key in file_cfg:
            try:
                return conv(str(file_cfg[key]))
            except (argparse.ArgumentTypeError, ValueError) as exc:
                parser.error(f"config key {key!r}: {exc}")
        return default

    out_default = os.environ.get(OUT_ENV, "runs")
    return RunConfig(
        study=study,
        seed=pick(args.seed, "seed", 42, _seed),
        trials=pick(args.trials, "trials", None, _positive_int),
        out_dir=Path(pick(args.out, "out", out_default, str)),
        params=params,
        threads=pick(args.threads, "threads", None, _positive_int),
    )


def execute(cfg: RunConfig, run_dir: Optional[Path] = None) -> int:
    trials.set_max_workers(cfg.threads)
    out = Path(run_dir) if run_dir else cfg.out_dir / f"{cfg.study}-seed{cfg.seed}-{time.strftime('%Y%m%d-%H%M%S')}"
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
        names = list(experiments.STUDIES) if cfg.study == "all" else [cfg.study]
        entries = []
        for name in names:
            sub = out / name if cfg.study == "all" else out
            log.info("running %s", name)
            entry = experiments.run_study(name, sub, cfg.seed, cfg.trials, cfg.params.get(name))
            log.info("%s finished in %.1fs (ok=%s)", name, entry["wall_clock_s"], entry["ok"])
            entries.append(entry)
        experiments.write_manifest(out, cfg.seed, entries, command=cfg.study)
    except OSError as exc:
        print(f"frechetlab: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"outputs written to {out}")
    for e in entries:
        print(f"  {e['study']:<9} {'ok' if e['ok'] else 'CHECK FAILED'} ({e['wall_clock_s']:.1f}s)")
    return EXIT_OK if all(e["ok"] for e in entries) else EXIT_FAILED_CHECK


def main(argv=None) -> int:
    cfg = parse_args(argv)
    logging.basicConfig(level=logging.INFO if "-v" in (argv or sys.argv) or "--verbose" in (argv or sys.argv)
                        else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return execute(cfg)


if __name__ == "__main__":
    raise SystemExit(main())
