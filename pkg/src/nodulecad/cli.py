"""``nodulecad`` command line.

Exit codes: 0 success, 1 invalid configuration or arguments, 2 unreadable or
malformed files.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from . import formats, pipeline
from .config import ConfigError, PipelineConfig, parse_config
from .formats import FormatError
from .metrics import CPM_RATES, FrocCurve, cpm, sensitivity_at
from .phantom import PhantomSpec, generate_phantom

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments; here that code means I/O failure
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    p.add_argument("--seed", type=int, default=None, help="phantom seed; overrides bootstrap_seed")
    p.add_argument("--config", type=Path, default=None, help="key = value configuration file")
    p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    return p


def _triple(text: str):
    parts = [int(t) for t in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated integers")
    return tuple(parts)


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = _Parser(prog="nodulecad", description="Multi-planar lung nodule CAD pipeline.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", parents=[common], help="generate a synthetic chest phantom")
    p.add_argument("--out", type=Path, required=True, help="output MPV1 volume")
    p.add_argument("--annotations", type=Path, required=True, help="output annotation CSV")
    p.add_argument("--dims", type=_triple, default=(256, 256, 256))
    p.add_argument("--nodules", type=int, default=10)
    p.add_argument("--vessels", type=int, default=8)
    p.add_argument("--noise", type=float, default=25.0)
    p.add_argument("--scan-id", default=None, help="defaults to the output file stem")

    p = sub.add_parser("preprocess", parents=[common], help="resample and window an HU volume")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("segment", parents=[common], help="lung masks for every plane and the MIP stream")
    p.add_argument("--input", type=Path, required=True, help="gray MPV1 volume")
    p.add_argument("--out-dir", type=Path, required=True)

    p = sub.add_parser("detect", parents=[common], help="per-plane candidate detection")
    p.add_argument("--input", type=Path, required=True, help="gray MPV1 volume")
    p.add_argument("--out", type=Path, required=True, help="candidate CSV")
    p.add_argument("--plane", choices=["axial", "coronal", "sagittal", "mip", "all"], default="all")
    p.add_argument("--masks", type=Path, default=None, help="directory written by 'segment'")
    p.add_argument("--scan-id", default=None)

    p = sub.add_parser("fuse", parents=[common], help="merge candidate streams")
    p.add_argument("--inputs", type=Path, nargs="+", required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("classify", parents=[common], help="false-positive reduction scores")
    p.add_argument("--input", type=Path, required=True, help="gray MPV1 volume")
    p.add_argument("--cands", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--weights", type=Path, default=None, help="MPW1 classifier weights (heuristic scorer if absent)")
    p.add_argument("--mask", type=Path, default=None, help="lung mask volume, used when use_mask = true")

    p = sub.add_parser("evaluate", parents=[common], help="FROC / CPM report")
    p.add_argument("--cands", type=Path, default=None)
    p.add_argument("--annotations", type=Path, default=None)
    p.add_argument("--froc", type=Path, default=None, help="score an existing FROC CSV instead")
    p.add_argument("--froc-out", type=Path, default=None)
    p.add_argument("--scans", nargs="*", default=None, help="scan ids that count even without findings")

    p = sub.add_parser("pipeline", parents=[common], help="run every stage, materialising each output")
    p.add_argument("--input", type=Path, required=True, help="HU MPV1 volume")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--annotations", type=Path, default=None)
    p.add_argument("--weights", type=Path, default=None)
    p.add_argument("--scan-id", default=None)
    return ap


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig()
    if args.config is not None:
        cfg = parse_config(formats.read_text(args.config))
    if args.seed is not None:
        cfg = replace(cfg, bootstrap_seed=args.seed)
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    return cfg


def _cmd_phantom(args, cfg) -> int:
    scan_id = args.scan_id or args.out.stem
    spec = PhantomSpec(
        dims=args.dims,
        n_nodules=args.nodules,
        vessel_count=args.vessels,
        noise_sigma=args.noise,
        seed=args.seed if args.seed is not None else 0,
        scan_id=scan_id,
    )
    vol, anns = generate_phantom(spec)
    formats.write_volume(args.out, vol)
    formats.write_text(args.annotations, formats.annotations_to_csv(anns))
    print(f"wrote {args.out} ({len(anns)} nodules)")
    return EXIT_OK


def _cmd_evaluate(args, cfg) -> int:
    if args.froc is not None:
        pts = formats.froc_from_csv(formats.read_text(args.froc), str(args.froc))
        curve = FrocCurve(tuple(p[0] for p in pts), tuple(p[1] for p in pts))
        for r in CPM_RATES:
            print(f"{r:11.3f}  {sensitivity_at(curve, r):11.3f}")
        print(f"CPM {cpm(curve):.3f}")
        return EXIT_OK
    if args.cands is None or args.annotations is None:
        raise UsageError("evaluate needs --cands and --annotations, or --froc")
    report = pipeline.evaluate_files(args.cands, args.annotations, cfg, args.froc_out, args.scans)
    print(report.table())
    return EXIT_OK


def run(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    cfg = _load_config(args)
    t = args.threads
    cmd = args.command
    if cmd == "phantom":
        return _cmd_phantom(args, cfg)
    if cmd == "preprocess":
        pipeline.preprocess_files(args.input, args.out, cfg)
    elif cmd == "segment":
        pipeline.segment_files(args.input, args.out_dir, cfg, t)
    elif cmd == "detect":
        streams = pipeline.STREAMS if args.plane == "all" else (args.plane,)
        pipeline.detect_files(args.input, args.out, cfg, streams, args.masks, args.scan_id or args.input.stem, t)
    elif cmd == "fuse":
        pipeline.fuse_files(args.inputs, args.out, cfg)
    elif cmd == "classify":
        pipeline.classify_files(args.input, args.cands, args.out, cfg, args.mask, args.weights, t)
    elif cmd == "evaluate":
        return _cmd_evaluate(args, cfg)
    elif cmd == "pipeline":
        report = pipeline.run_pipeline_files(
            args.input, args.out_dir, cfg, args.scan_id or args.input.stem, args.annotations, args.weights, t
        )
        if report is not None:
            print(report.table())
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    try:
        return run(argv)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except FormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
