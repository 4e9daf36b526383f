"""Command-line front end.

Subcommands cover the pipeline end to end: ``validate`` a corpus,
``evaluate`` components against ground truth, ``select`` the best
component per class, ``merge`` into ensemble masks, ``synth`` a test
corpus, and ``report`` tables plus the cost model.

Exit codes are stable API: 0 success, 1 data/validation failure,
2 usage error, 3 I/O error.  All configuration is flags and files;
no environment variables are consulted.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .ensemble import (
    VARIANT_CLASSWISE,
    VARIANT_NAIVE,
    SelectionMap,
    run_ensemble,
    select_best,
)
from .errors import DataError, UsageError
from .maskio import load_manifest, validate_corpus
from .metrics import MODE_ACCUMULATED, MODES, ClassScoreTable, build_score_table
from .report import (
    ENSEMBLE_ROW,
    CostParams,
    cost_estimate,
    render_checkmark_table,
    render_score_table,
)
from .synth import generate_corpus, load_synth_config
from .util import atomic_write_text

EXIT_OK = 0
EXIT_DATA = 1
EXIT_USAGE = 2
EXIT_IO = 3

_COST_KEYS = {
    "I": "images",
    "N": "components",
    "C": "classes",
    "M": "refinements",
    "comp_train": "comp_train",
    "comp_infer": "comp_infer",
    "comp_epochs": "comp_epochs",
    "ref_train": "ref_train",
    "ref_infer": "ref_infer",
    "ref_epochs": "ref_epochs",
    "seg_train": "seg_train",
    "seg_infer": "seg_infer",
    "seg_epochs": "seg_epochs",
}
_COST_REQUIRED = ("I", "N", "C")


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        atomic_write_text(Path(out), text)


def cmd_validate(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    report = validate_corpus(manifest, require_ground_truth=args.require_gt)
    for finding in report.findings:
        print(f"{finding.image_id}: {finding.kind}: {finding.detail}")
    if report.passed:
        print(f"OK ({len(manifest.images)} image(s), {len(manifest.components)} component(s))")
        return EXIT_OK
    print(f"FAILED: {len(report.findings)} finding(s)")
    return EXIT_DATA


def cmd_evaluate(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    table = build_score_table(manifest, mode=args.mode, threads=args.threads)
    _emit(table.to_csv(), args.out)
    return EXIT_OK


def cmd_select(args: argparse.Namespace) -> int:
    table = ClassScoreTable.load(args.scores)
    selection = select_best(table)
    _emit(selection.to_csv(), args.out)
    return EXIT_OK


def cmd_merge(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    selection = SelectionMap.load(args.selection)
    scores = run_ensemble(
        manifest,
        selection,
        variant=args.variant,
        out_dir=args.out,
        mask_format=args.format,
        threads=args.threads,
    )
    print(f"wrote {len(manifest.images)} mask(s) to {args.out}")
    if scores is not None:
        print(f"ensemble mIoU: {scores.mean():.4f}")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    config = load_synth_config(args.config)
    manifest = generate_corpus(config, args.out, threads=args.threads)
    print(
        f"wrote {len(manifest.images)} image(s) x {len(manifest.components)} "
        f"component(s) to {args.out}"
    )
    return EXIT_OK


def _parse_cost(tokens: list[str]) -> CostParams:
    values: dict[str, int] = {}
    for token in tokens:
        key, sep, raw = token.partition("=")
        if not sep:
            raise UsageError(f"cost parameter '{token}' is not KEY=VALUE")
        if key not in _COST_KEYS:
            raise UsageError(
                f"unknown cost key '{key}' (known: {', '.join(_COST_KEYS)})"
            )
        if key in values:
            raise UsageError(f"duplicate cost key '{key}'")
        try:
            values[key] = int(raw)
        except ValueError:
            raise UsageError(f"cost value for '{key}' must be an integer") from None
    missing = [k for k in _COST_REQUIRED if k not in values]
    if missing:
        raise UsageError(f"--cost requires {', '.join(missing)}")
    return CostParams(**{_COST_KEYS[k]: v for k, v in values.items()})


def cmd_report(args: argparse.Namespace) -> int:
    table = ClassScoreTable.load(args.scores)
    selection = SelectionMap.load(args.selection)
    components: list[str] = []
    for name, _mode, _scores in table.rows:
        if name != ENSEMBLE_ROW and name not in components:
            components.append(name)
    sections = [
        render_score_table(table, selection),
        render_checkmark_table(selection, components),
    ]
    if args.cost:
        sections.append(cost_estimate(_parse_cost(args.cost)).to_text())
    _emit("\n".join(sections), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segensemble",
        description="Score, select and merge segmentation pseudo-label sets.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check every file a manifest references")
    p.add_argument("manifest")
    p.add_argument(
        "--require-gt",
        action="store_true",
        help="fail images that declare no ground truth",
    )
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("evaluate", help="score all components against ground truth")
    p.add_argument("manifest")
    p.add_argument("--mode", choices=MODES, default=MODE_ACCUMULATED)
    p.add_argument("--out", help="write the score CSV here instead of stdout")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("select", help="pick the best component per class")
    p.add_argument("scores", help="score CSV from 'evaluate'")
    p.add_argument("--out", help="write the selection CSV here instead of stdout")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("merge", help="write ensemble masks from a selection")
    p.add_argument("manifest")
    p.add_argument("selection", help="selection CSV from 'select'")
    p.add_argument(
        "--variant", choices=(VARIANT_CLASSWISE, VARIANT_NAIVE), default=VARIANT_CLASSWISE
    )
    p.add_argument("--out", required=True, help="output directory for masks")
    p.add_argument("--format", choices=("pgm", "png"), default="pgm")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("synth", help="generate a synthetic corpus from a config")
    p.add_argument("config")
    p.add_argument("--out", required=True, help="output directory for the corpus")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="render score/selection tables and costs")
    p.add_argument("scores", help="score CSV from 'evaluate'")
    p.add_argument("selection", help="selection CSV from 'select'")
    p.add_argument(
        "--cost",
        nargs="+",
        metavar="KEY=VALUE",
        help="cost-model parameters (requires I, N, C; see docs)",
    )
    p.add_argument("--out", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits itself on --version/usage errors
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
