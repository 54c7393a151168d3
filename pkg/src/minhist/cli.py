"""Command-line surface tying the library together.

Commands: histogram, train, classify, evaluate, identify {enroll,search,
report}, refine, mds. Models and scores are JSON, tabular reports are CSV.

Exit codes: 0 and 1 are reserved for classification outcomes (real /
synthetic); errors use 2 (unreadable or malformed template), 3 (too few
minutiae), 4 (empty class), 5 (corrupt model or index), 64 (usage).

A JSON config file may provide defaults for the bin spec and the training
protocol; its path comes from --config or the MINHIST_CONFIG environment
variable, and individual flags override it.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import List, Optional

from .analysis import DistanceMatrix, mds_embed
from .histogram import BinSpec, build_2dmh, build_4dmh
from .identify import GalleryIndex, access_rate_report, build_index, search
from .realness import ClassModel, TrainConfig, classify_template, evaluate, train
from .refine import OrientationField, RefineConfig, init_template, refine, write_trace_csv
from .template import (
    MinutiaTemplate,
    TemplateParseError,
    load_directory,
    load_template,
    rescale_to_500dpi,
    save_template,
)

EXIT_REAL = 0
EXIT_SYNTHETIC = 1
EXIT_PARSE = 2
EXIT_TOO_FEW = 3
EXIT_EMPTY_CLASS = 4
EXIT_BAD_MODEL = 5
EXIT_USAGE = 64

ENV_CONFIG = "MINHIST_CONFIG"


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _fail(code: int, message: str) -> "CliError":
    return CliError(code, message)


def _load_config(path: Optional[str]) -> dict:
    if path is None:
        path = os.environ.get(ENV_CONFIG)
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise _fail(EXIT_USAGE, f"cannot read config {path}: {exc}")


def _spec_from(args, config: dict) -> BinSpec:
    base = dict(config.get("spec", {}))
    for key, flag in (
        ("d_max", "d_max"),
        ("b_dist", "bins_dist"),
        ("b_dir", "bins_dir"),
        ("b_relangle", "bins_relangle"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            base[key] = value
    try:
        return BinSpec(**base)
    except (TypeError, ValueError) as exc:
        raise _fail(EXIT_USAGE, f"bad bin specification: {exc}")


def _read_template(path: str) -> MinutiaTemplate:
    try:
        return load_template(path)
    except OSError as exc:
        raise _fail(EXIT_PARSE, f"cannot read template {path}: {exc}")
    except TemplateParseError as exc:
        raise _fail(EXIT_PARSE, f"{path}: {exc}")


def _read_model(path: str) -> ClassModel:
    try:
        return ClassModel.load(path)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise _fail(EXIT_BAD_MODEL, f"cannot load model {path}: {exc}")


def _read_templates_dir(path: str, label: Optional[str] = None) -> List[MinutiaTemplate]:
    try:
        templates = load_directory(path)
    except OSError as exc:
        raise _fail(EXIT_PARSE, f"cannot read directory {path}: {exc}")
    if label is not None:
        from dataclasses import replace

        templates = [replace(t, label=label) for t in templates]
    return templates


# --- subcommand implementations -------------------------------------------


def cmd_histogram(args, config: dict) -> int:
    spec = _spec_from(args, config)
    t = rescale_to_500dpi(_read_template(args.template))
    try:
        if args.dims == 2:
            h = build_2dmh(t, spec, normalize=args.normalize)
        else:
            h = build_4dmh(t, spec, normalize=args.normalize)
    except ValueError as exc:
        raise _fail(EXIT_TOO_FEW, str(exc))
    json.dump(h.to_dict(), sys.stdout)
    sys.stdout.write("\n")
    return 0


def cmd_train(args, config: dict) -> int:
    train_cfg = TrainConfig.from_dict(config.get("train", {}))
    spec = _spec_from(args, config)
    train_cfg.spec = spec
    if args.split is not None:
        parts = tuple(int(x) for x in args.split.split("/"))
        if len(parts) != 3:
            raise _fail(EXIT_USAGE, "--split expects N1/N2/N3")
        train_cfg.split = parts
    if args.no_side_features:
        train_cfg.use_side_features = False
    real = _read_templates_dir(args.real_dir, label="real")
    synth = _read_templates_dir(args.synth_dir, label="synthetic")
    try:
        result = train(real, synth, train_cfg)
    except ValueError as exc:
        if "class empty" in str(exc):
            raise _fail(EXIT_EMPTY_CLASS, str(exc))
        raise _fail(EXIT_USAGE, str(exc))
    result.model.save(args.out)
    print(f"set II accuracy: {result.set2_accuracy:.1f}")
    return 0


def cmd_classify(args, config: dict) -> int:
    model = _read_model(args.model)
    t = _read_template(args.template)
    try:
        score = classify_template(t, model)
    except ValueError as exc:
        raise _fail(EXIT_TOO_FEW, str(exc))
    json.dump(score.to_dict(), sys.stdout)
    sys.stdout.write("\n")
    return EXIT_REAL if score.decision == "real" else EXIT_SYNTHETIC


def cmd_evaluate(args, config: dict) -> int:
    model = _read_model(args.model)
    templates: List[MinutiaTemplate] = []
    templates += _read_templates_dir(args.real_dir, label="real")
    templates += _read_templates_dir(args.synth_dir, label="synthetic")
    try:
        report = evaluate(model, templates)
    except ValueError as exc:
        raise _fail(EXIT_USAGE, str(exc))
    if args.out:
        report.write_csv(args.out)
    print(f"accuracy: {report.accuracy:.1f}")
    for label in ("real", "synthetic"):
        print(f"  {label}: {report.per_class[label]:.1f}")
    return 0


def cmd_identify_enroll(args, config: dict) -> int:
    spec_cfg = dict(config.get("identify_spec", {}))
    spec = BinSpec(**spec_cfg) if spec_cfg else BinSpec(b_dist=20, b_dir=20, b_relangle=20)
    templates = _read_templates_dir(args.directory)
    try:
        index = build_index(templates, spec)
    except ValueError as exc:
        raise _fail(EXIT_USAGE, str(exc))
    index.save(args.out)
    print(f"enrolled {len(index.entries)} impressions of {len(index.finger_ids())} fingers")
    return 0


def _read_index(path: str) -> GalleryIndex:
    try:
        return GalleryIndex.load(path)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise _fail(EXIT_BAD_MODEL, f"cannot load index {path}: {exc}")


def cmd_identify_search(args, config: dict) -> int:
    index = _read_index(args.index)
    query = _read_template(args.template)
    try:
        result = search(index, query)
    except ValueError as exc:
        raise _fail(EXIT_TOO_FEW, str(exc))
    payload = {
        "query": list(result.query_id),
        "true_rank": result.true_rank,
        "accessed_fraction": result.accessed_fraction,
        "ranked": [[fid, score] for fid, score in result.ranked[: args.top]],
    }
    json.dump(payload, sys.stdout)
    sys.stdout.write("\n")
    return 0


def cmd_identify_report(args, config: dict) -> int:
    index = _read_index(args.index)
    queries = _read_templates_dir(args.directory)
    try:
        report = access_rate_report(index, queries)
    except ValueError as exc:
        raise _fail(EXIT_USAGE, str(exc))
    print(f"queries: {report.n_queries}")
    print(f"mean accessed fraction: {report.mean_accessed_fraction:.4f}")
    print(f"rank-1: {report.rank1_percent:.1f}%")
    if report.rank1_percent_min30 is not None:
        print(
            f"rank-1 (>=30 minutiae, n={report.n_queries_min30}): "
            f"{report.rank1_percent_min30:.1f}%"
        )
    return 0


def cmd_refine(args, config: dict) -> int:
    model = _read_model(args.target)
    field = OrientationField(kind=args.field, angle=args.field_angle)
    cfg = RefineConfig(
        target=model.avg_real,
        threshold=args.threshold,
        max_iters=args.max_iters,
        rng_seed=args.seed,
        foreground=tuple(args.foreground),
        count_distribution=tuple(args.counts),
        orientation_field=field,
        params=model.params,
    )
    template = init_template(cfg)
    result = refine(template, cfg)
    save_template(result.template, args.out)
    if args.trace:
        write_trace_csv(result.trace, args.trace)
    print(f"{result.status}: emd {result.final_emd:.4f} after {len(result.trace) - 1} moves")
    return 0


def cmd_mds(args, config: dict) -> int:
    try:
        dm = DistanceMatrix.from_csv(args.matrix)
    except (OSError, ValueError) as exc:
        raise _fail(EXIT_PARSE, f"cannot read distance matrix {args.matrix}: {exc}")
    result = mds_embed(dm, dims=args.dims)
    result.write_csv(args.out)
    if result.flagged_dims:
        print(f"warning: dimensions {result.flagged_dims} have negative eigenvalues",
              file=sys.stderr)
    return 0


# --- argument parsing ------------------------------------------------------


def _add_spec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--d-max", dest="d_max", type=float, default=None)
    p.add_argument("--bins-dist", dest="bins_dist", type=int, default=None)
    p.add_argument("--bins-dir", dest="bins_dir", type=int, default=None)
    p.add_argument("--bins-relangle", dest="bins_relangle", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="minhist",
        description="Minutiae histograms: realness testing, identification, refinement.",
    )
    parser.add_argument("--config", default=None, help=f"JSON config (default: ${ENV_CONFIG})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("histogram", help="print a template's histogram as JSON")
    p.add_argument("template")
    p.add_argument("--dims", type=int, choices=(2, 4), default=2)
    p.add_argument("--normalize", action="store_true")
    _add_spec_flags(p)
    p.set_defaults(func=cmd_histogram)

    p = sub.add_parser("train", help="train a realness model")
    p.add_argument("real_dir")
    p.add_argument("synth_dir")
    p.add_argument("--out", required=True)
    p.add_argument("--split", default=None, help="fingers per set, e.g. 40/30/40")
    p.add_argument("--no-side-features", action="store_true")
    _add_spec_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="classify a template (exit 0 real, 1 synthetic)")
    p.add_argument("model")
    p.add_argument("template")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate", help="evaluate a model on labeled directories")
    p.add_argument("model")
    p.add_argument("real_dir")
    p.add_argument("synth_dir")
    p.add_argument("--out", default=None, help="per-template CSV report")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("identify", help="gallery enrollment and search")
    idsub = p.add_subparsers(dest="subcommand", required=True)
    q = idsub.add_parser("enroll")
    q.add_argument("directory")
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_identify_enroll)
    q = idsub.add_parser("search")
    q.add_argument("index")
    q.add_argument("template")
    q.add_argument("--top", type=int, default=10)
    q.set_defaults(func=cmd_identify_search)
    q = idsub.add_parser("report")
    q.add_argument("index")
    q.add_argument("directory")
    q.set_defaults(func=cmd_identify_report)

    p = sub.add_parser("refine", help="generate and refine a synthetic template")
    p.add_argument("--target", required=True, help="realness model JSON (avg_real is the target)")
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", default=None, help="per-iteration CSV trace")
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--foreground", type=float, nargs=4, default=(0.0, 0.0, 200.0, 200.0),
                   metavar=("X0", "Y0", "X1", "Y1"))
    p.add_argument("--counts", type=int, nargs="+", default=(30,),
                   help="empirical minutiae count distribution")
    p.add_argument("--field", choices=("constant", "radial"), default="constant")
    p.add_argument("--field-angle", type=float, default=0.0)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("mds", help="classical MDS of a distance matrix CSV")
    p.add_argument("matrix")
    p.add_argument("--dims", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mds)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
        return args.func(args, config)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
