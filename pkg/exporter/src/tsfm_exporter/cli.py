"""Command-line front end: one subcommand-free invocation per export."""

import argparse
import sys

from . import __version__
from .errors import ExporterError
from .export import DEFAULT_HIDDEN_SIZE, DEFAULT_MODEL_ID, ExportJob, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tsfm-export",
        description="embed activity-count patches with a frozen "
                    "time-series foundation model and write a TSEB file")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    parser.add_argument("--manifest", required=True,
                        help="patch manifest CSV (the .tspx values file is "
                             "expected next to it unless --values is given)")
    parser.add_argument("--values", default=None,
                        help="patch values file (default: manifest path "
                             "with a .tspx suffix)")
    parser.add_argument("--output", required=True,
                        help="embedding file to write; a .manifest sidecar "
                             "lands next to it")
    parser.add_argument("--model-id", default=DEFAULT_MODEL_ID,
                        help=f"checkpoint to run (default {DEFAULT_MODEL_ID})")
    parser.add_argument("--expected-dim", type=int, default=DEFAULT_HIDDEN_SIZE,
                        help="refuse to export unless the model's hidden "
                             f"size matches (default {DEFAULT_HIDDEN_SIZE})")
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--device", default="cpu")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = ExportJob(
            manifest_path=args.manifest,
            values_path=args.values,
            output_path=args.output,
            model_id=args.model_id,
            expected_dim=args.expected_dim,
            batch_size=args.batch_size,
            device=args.device,
        )
        rows = export(job)
    except FileNotFoundError as exc:
        print(f"error: missing input: {exc}", file=sys.stderr)
        return 2
    except ExporterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {rows.shape[0]} embeddings of dim {rows.shape[1]} "
          f"to {job.output_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
