"""Command line entry points: gen-data, run, ablate, report.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .data import SyntheticSpec, generate_synthetic, save_csv
from .errors import ConfigError, MappingError, ParseError, PlanError
from .harness import (
    ABLATION_PRESETS,
    load_config,
    run_ablation,
    run_scenario,
    write_comparison_csv,
    write_summary_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="inkrementa",
        description="Class-incremental learning scenarios with exemplars, "
        "distillation, and head weight aligning.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="emit synthetic train/test CSVs from a config")
    gen.add_argument("--config", required=True, help="scenario config JSON")
    gen.add_argument("--seed", type=int, default=None, help="override the config seed")
    gen.add_argument("--out", default=".", help="output directory")

    run = sub.add_parser("run", help="execute one scenario and write its report JSON")
    run.add_argument("--config", required=True, help="scenario config JSON")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--out", default=".", help="output directory")

    ablate = sub.add_parser("ablate", help="run a component/loss/norm ablation matrix")
    ablate.add_argument("--config", required=True, help="scenario config JSON")
    ablate.add_argument("--seed", type=int, default=None, help="override the base seed")
    ablate.add_argument(
        "--preset",
        default="components",
        choices=sorted(ABLATION_PRESETS),
        help="which variant matrix to run",
    )
    ablate.add_argument("--seeds", type=int, default=3, help="seeds per variant")
    ablate.add_argument("--out", default=".", help="output directory")

    report = sub.add_parser("report", help="merge run report JSONs into a summary CSV")
    report.add_argument("inputs", nargs="+", help="run report JSON files")
    report.add_argument("--out", required=True, help="summary CSV path")

    return parser


def _cmd_gen_data(args) -> int:
    config = load_config(args.config, seed_override=args.seed)
    if not isinstance(config.data, SyntheticSpec):
        raise ConfigError("gen-data needs a synthetic data section")
    train, test = generate_synthetic(replace(config.data, seed=config.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_csv(train, out / "train.csv")
    save_csv(test, out / "test.csv")
    print(f"wrote {out / 'train.csv'} ({train.n_samples} rows)")
    print(f"wrote {out / 'test.csv'} ({test.n_samples} rows)")
    return EXIT_OK


def _cmd_run(args) -> int:
    config = load_config(args.config, seed_override=args.seed)
    report = run_scenario(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{report.run_id}.json"
    report.write(path)
    for stage in report.stage_reports:
        print(
            f"stage {stage.stage}: N={stage.n_classes:3d}  "
            f"accuracy={stage.accuracy:.4f}  accn={stage.accn:.4f}"
        )
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_ablate(args) -> int:
    config = load_config(args.config, seed_override=args.seed)
    reports, table = run_ablation(config, ABLATION_PRESETS[args.preset], seeds=args.seeds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for report in reports:
        report.write(out / f"{report.run_id}.json")
    write_summary_csv(reports, out / "summary.csv")
    write_comparison_csv(table, out / "comparison.csv")
    width = max(len(row["method"]) for row in table)
    for row in table:
        print(
            f"{row['method']:<{width}}  "
            f"acc {row['final_accuracy_mean']:.4f} ± {row['final_accuracy_std']:.4f}  "
            f"accn {row['final_accn_mean']:.4f} ± {row['final_accn_std']:.4f}"
        )
    print(f"wrote {len(reports)} report(s), {out / 'summary.csv'}, {out / 'comparison.csv'}")
    return EXIT_OK


def _cmd_report(args) -> int:
    rows = []
    for path in args.inputs:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path} is not valid JSON: {exc}", line=exc.lineno) from exc
        for key in ("run_id", "seed", "stages", "final"):
            if key not in doc:
                raise ParseError(f"{path} is missing {key!r}; not a run report")
        rows.append(doc)
    import csv as _csv

    with Path(args.out).open("w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["run_id", "seed", "stage", "N", "accuracy", "accn"])
        for doc in rows:
            for stage in doc["stages"]:
                writer.writerow(
                    [
                        doc["run_id"],
                        doc["seed"],
                        stage["stage"],
                        stage["n_classes"],
                        format(float(stage["accuracy"]), ".6f"),
                        format(float(stage["accn"]), ".6f"),
                    ]
                )
        for doc in rows:
            final = doc["final"]
            writer.writerow(
                [
                    doc["run_id"],
                    doc["seed"],
                    "final",
                    final["n_classes"],
                    format(float(final["accuracy"]), ".6f"),
                    format(float(final["accn"]), ".6f"),
                ]
            )
    print(f"wrote {args.out} ({len(rows)} run(s))")
    return EXIT_OK


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "run": _cmd_run,
    "ablate": _cmd_ablate,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, PlanError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, FileNotFoundError, MappingError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - last-resort CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
