"""Command-line front door for the AGB density-map pipeline.

Subcommands: synth (generate a synthetic corpus), gen-maps (build AGBD
density maps for a manifest), integrate (print map totals), split
(assign train/test), baseline (median-of-train predictions), eval
(error and rank statistics) and visualize (density map to PNG).

Exit codes: 0 = success (dropped samples are logged, not fatal),
1 = usage error, 2 = data error.
"""

import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from PIL import Image

from . import agbd
from .dataset import (
    read_instance_map,
    read_manifest,
    read_scene_metadata,
    split_dataset,
    write_manifest,
)
from .density import (
    DEFAULT_GAMMA,
    DEFAULT_MIN_AREA_FRACTION,
    build_density_map,
    integrate,
    visualize,
)
from .errors import (
    AgbMapError,
    DegeneratePlotError,
    EmptySceneError,
    FormatError,
    ManifestError,
    MissingTotalError,
)
from .metrics import (
    PredictionPair,
    evaluate,
    median_of,
    read_predictions,
    write_predictions,
)
from .synth import SynthParams, synth_corpus

__all__ = ["main"]

log = logging.getLogger("agbmap")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

WORKERS_ENV = "AGBMAP_WORKERS"


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that exits with status 1 on usage errors (not 2)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_in(low, high, inclusive_low=False, inclusive_high=False):
    def convert(text):
        try:
            value = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}")
        lo_ok = value >= low if inclusive_low else value > low
        hi_ok = value <= high if inclusive_high else value < high
        if not (lo_ok and hi_ok):
            lo = "[" if inclusive_low else "("
            hi = "]" if inclusive_high else ")"
            raise argparse.ArgumentTypeError(
                f"{text!r} outside {lo}{low:g}, {high:g}{hi}"
            )
        return value

    return convert


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {text!r}")
    return value


def _seed(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError(f"seed must be >= 0: {text!r}")
    return value


def _non_negative_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0: {text!r}")
    return value


def _relocate(path_str, old_base, new_base):
    """Rewrite a manifest-relative path so it resolves from new_base."""
    if not path_str:
        return ""
    p = Path(path_str)
    if p.is_absolute():
        return str(p)
    return os.path.relpath(old_base / p, new_base)


def cmd_synth(args):
    params = SynthParams(n_trees=args.n_trees, seed=args.seed)

    def on_drop(sample_id, reason):
        log.warning("dropped %s: %s", sample_id, reason)

    manifest_path, samples = synth_corpus(
        args.out_dir, args.n_scenes, params=params, on_drop=on_drop
    )
    log.info("wrote %d scene(s); manifest at %s", len(samples), manifest_path)
    return EXIT_OK


def cmd_gen_maps(args):
    workers = args.workers
    if workers is None:
        raw = os.environ.get(WORKERS_ENV, "1")
        try:
            workers = int(raw)
        except ValueError:
            workers = 0
        if workers < 1:
            print(
                f"agbmap gen-maps: error: {WORKERS_ENV}={raw!r} is not a"
                " positive integer",
                file=sys.stderr,
            )
            return EXIT_USAGE

    manifest_path = Path(args.manifest)
    samples = read_manifest(manifest_path)
    if not samples:
        raise ManifestError(f"{manifest_path}: manifest has no samples")
    seen = set()
    for s in samples:
        if s.sample_id in seen:
            raise ManifestError(f"{manifest_path}: duplicate sample_id {s.sample_id!r}")
        seen.add(s.sample_id)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = manifest_path.parent

    def compute(sample):
        """Pure per-sample work; returns (status, message, agbd_bytes, total)."""
        try:
            if not sample.metadata_path:
                raise ManifestError(f"sample {sample.sample_id!r} has no metadata_path")
            if not sample.instance_map_path:
                raise ManifestError(
                    f"sample {sample.sample_id!r} has no instance_map_path"
                )
            scene = read_scene_metadata(base / sample.metadata_path)
            indices = read_instance_map(base / sample.instance_map_path)
            try:
                dmap = build_density_map(
                    scene, indices, min_area_fraction=args.min_area_fraction
                )
            except (DegeneratePlotError, EmptySceneError) as err:
                return ("drop", str(err), None, None)
            total = integrate(dmap)
            if args.max_total_agb is not None and total > args.max_total_agb:
                return (
                    "drop",
                    f"total {total!r} kg/m^2 exceeds --max-total-agb"
                    f" {args.max_total_agb:g}",
                    None,
                    total,
                )
            return ("ok", None, agbd.encode(dmap), total)
        except (AgbMapError, OSError) as err:
            return ("error", str(err), None, None)

    failed = 0
    out_rows = []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for sample, (status, message, payload, total) in zip(
            samples, pool.map(compute, samples)
        ):
            row = replace(
                sample,
                rgb_path=_relocate(sample.rgb_path, base, out_dir),
                instance_map_path=_relocate(sample.instance_map_path, base, out_dir),
                metadata_path=_relocate(sample.metadata_path, base, out_dir),
                depth_path=_relocate(sample.depth_path, base, out_dir),
                density_map_path="",
                total_agb=None,
            )
            if status == "ok":
                name = f"{sample.sample_id}.agbd"
                (out_dir / name).write_bytes(payload)
                row.density_map_path = name
                row.total_agb = total
            elif status == "drop":
                row.total_agb = total
                log.warning("dropped %s: %s", sample.sample_id, message)
            else:
                failed += 1
                log.error("%s: %s", sample.sample_id, message)
            out_rows.append(row)

    out_manifest = out_dir / "manifest.csv"
    write_manifest(out_manifest, out_rows)
    n_ok = sum(1 for r in out_rows if r.density_map_path)
    log.info(
        "wrote %d density map(s) for %d sample(s); manifest at %s",
        n_ok,
        len(samples),
        out_manifest,
    )
    if failed:
        log.error("%d sample(s) failed", failed)
        return EXIT_DATA
    return EXIT_OK


def cmd_integrate(args):
    for path in args.density_maps:
        try:
            values = agbd.read(path)
        except FormatError as err:
            # err's message already names the byte offset; just add the path
            raise AgbMapError(f"{path}: {err}") from err
        print(f"{path},{integrate(values)!r}")
    return EXIT_OK


def cmd_split(args):
    manifest_path = Path(args.manifest)
    samples = read_manifest(manifest_path)
    train, test = split_dataset(samples, args.train_fraction, args.seed)
    for s in train:
        s.split = "train"
    for s in test:
        s.split = "test"
    out = Path(args.out) if args.out else manifest_path
    write_manifest(out, samples)
    log.info("%d train / %d test; manifest at %s", len(train), len(test), out)
    return EXIT_OK


def cmd_baseline(args):
    manifest_path = Path(args.manifest)
    samples = read_manifest(manifest_path)
    train = [s for s in samples if s.split == "train"]
    test = [s for s in samples if s.split == "test"]
    if not train:
        raise ManifestError(f"{manifest_path}: no rows with split=train")
    for s in train + test:
        if s.total_agb is None:
            raise MissingTotalError(
                f"sample {s.sample_id!r} has no total_agb; run gen-maps first"
            )
    median = median_of([s.total_agb for s in train])
    pairs = [
        PredictionPair(
            sample_id=s.sample_id, predicted_agb=median, true_agb=s.total_agb
        )
        for s in test
    ]
    if args.out:
        with Path(args.out).open("w", newline="", encoding="utf-8") as fh:
            write_predictions(fh, pairs)
    else:
        write_predictions(sys.stdout, pairs)
    log.info(
        "median of %d train total(s) is %r; wrote %d prediction(s)",
        len(train),
        median,
        len(pairs),
    )
    return EXIT_OK


def cmd_eval(args):
    pairs = read_predictions(args.predictions)
    rank = args.spearman or args.prune is not None
    report = evaluate(
        pairs, per_id=args.per_id, rank=rank, prune_fraction=args.prune
    )
    print(report.format_table())
    if args.csv_out:
        with Path(args.csv_out).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("metric", "value"))
            for key, value in report.rows():
                writer.writerow((key, repr(value) if isinstance(value, float) else value))
    return EXIT_OK


def cmd_visualize(args):
    values = agbd.read(args.density_map)
    rgb = visualize(values, gamma=args.gamma, colormap=args.colormap)
    Image.fromarray(rgb).save(args.out_png, format="PNG")
    log.info("wrote %s", args.out_png)
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="agbmap", description=__doc__.splitlines()[0])
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="enable debug logging"
    )
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="COMMAND")

    p = sub.add_parser("synth", help="generate a synthetic scene corpus")
    p.add_argument("out_dir", help="directory for the corpus and its manifest")
    p.add_argument("--n-scenes", type=_positive_int, default=20)
    p.add_argument(
        "--n-trees", type=_positive_int, default=SynthParams().n_trees,
        help="trees per scene",
    )
    p.add_argument("--seed", type=_seed, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("gen-maps", help="build AGBD density maps for a manifest")
    p.add_argument("manifest", help="input manifest CSV")
    p.add_argument("out_dir", help="directory for AGBD files and the updated manifest")
    p.add_argument(
        "--min-area-fraction",
        type=_float_in(0, 1, inclusive_low=True, inclusive_high=True),
        default=DEFAULT_MIN_AREA_FRACTION,
        help="drop trees covering less than this fraction of the image",
    )
    p.add_argument(
        "--max-total-agb",
        type=_non_negative_float,
        default=None,
        metavar="KG_PER_M2",
        help="drop samples whose integrated total exceeds this value",
    )
    p.add_argument(
        "--workers",
        type=_positive_int,
        default=None,
        help=f"parallel workers (default: ${WORKERS_ENV} or 1)",
    )
    p.set_defaults(func=cmd_gen_maps)

    p = sub.add_parser("integrate", help="print path,total_agb for AGBD files")
    p.add_argument("density_maps", nargs="+", metavar="AGBD_FILE")
    p.set_defaults(func=cmd_integrate)

    p = sub.add_parser("split", help="assign train/test split labels")
    p.add_argument("manifest")
    p.add_argument(
        "--train-fraction", type=_float_in(0, 1), default=0.8,
        help="fraction of samples labeled train",
    )
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("-o", "--out", default=None, help="output manifest (default: in place)")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser(
        "baseline", help="predict the median train total for every test row"
    )
    p.add_argument("manifest", help="manifest with split and total_agb columns")
    p.add_argument("-o", "--out", default=None, help="predictions CSV (default: stdout)")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("eval", help="error and rank statistics for predictions")
    p.add_argument("predictions", help="CSV: sample_id,location_id,predicted_agb,true_agb")
    p.add_argument("--per-id", action="store_true", help="aggregate per location_id")
    p.add_argument("--spearman", action="store_true", help="rank correlation")
    p.add_argument(
        "--prune",
        type=_float_in(0, 1, inclusive_low=True),
        default=None,
        metavar="FRACTION",
        help="also report Spearman after dropping the worst FRACTION",
    )
    p.add_argument("--csv-out", default=None, help="write the report as CSV here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("visualize", help="render a density map to PNG")
    p.add_argument("density_map", help="AGBD file")
    p.add_argument("out_png")
    p.add_argument(
        "--gamma", type=_float_in(0, float("inf")), default=DEFAULT_GAMMA
    )
    p.add_argument(
        "--colormap", choices=("spectral", "grayscale"), default="spectral"
    )
    p.set_defaults(func=cmd_visualize)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)

    # Rebind the handler each call so output follows the current stderr
    # (pytest swaps the stream between tests).
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    log.handlers[:] = [handler]
    log.propagate = False
    log.setLevel(logging.DEBUG if args.verbose else logging.INFO)

    try:
        return args.func(args)
    except AgbMapError as err:
        log.error("%s", err)
        return EXIT_DATA
    except OSError as err:
        log.error("%s", err)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
