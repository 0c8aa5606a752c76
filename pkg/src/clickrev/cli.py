"""Command-line entry points: synth, ingest, train, evaluate, serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path


def _cmd_synth(args: argparse.Namespace) -> int:
    from .data import synth_dataset

    manifest = synth_dataset(args.n, args.seed, args.out)
    print(f"wrote {len(manifest.entries)} entries to {manifest.root / 'manifest.jsonl'}")
    return 0


def _cmd_ingest(args: argparse.Namespace) -> int:
    from .data import crop_axial, ingest_volume, write_slices

    volume = ingest_volume(args.volume)
    records = crop_axial(volume)
    manifest = write_slices(records, args.out, splits=[args.split] * len(records),
                            prefix=volume.volume_id)
    print(f"ingested {volume.volume_id}: {len(manifest.entries)} slice entries -> {manifest.root}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    from .data import DatasetManifest
    from .training import TrainingConfig, train

    manifest = DatasetManifest.load(args.manifest)
    config = TrainingConfig.from_file(args.config) if args.config else TrainingConfig()
    final = train(manifest, config, args.out, seed=args.seed)
    print(f"final checkpoint: {final}")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    from .checkpoint import load_checkpoint
    from .data import DatasetManifest
    from .evaluate import emit_report, evaluate_manifest, render_table, write_traces

    ckpt = load_checkpoint(args.checkpoint)
    model = ckpt.build_model()
    manifest = DatasetManifest.load(args.manifest)
    report, traces = evaluate_manifest(
        model,
        manifest,
        split=args.split,
        max_clicks=args.clicks,
        seed=args.seed,
        checkpoint_id=f"{Path(args.checkpoint).name}@{ckpt.iteration}",
    )
    out = Path(args.out)
    paths = emit_report(report, out, plots=args.plots)
    write_traces(traces, out / "traces.jsonl")
    latencies = [ms for t in traces for ms in t.latencies_ms]
    print(render_table(report), end="")
    print(f"mean model latency: {sum(latencies) / len(latencies):.1f} ms/click")
    print("wrote: " + ", ".join(str(p) for p in paths.values()))
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    from .service import serve

    serve(args.checkpoint, port=args.port, session_ttl_s=args.ttl)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clickrev")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("ingest", help="ingest a NIfTI case directory into slices")
    p.add_argument("--volume", type=Path, required=True,
                   help="directory with image.nii[.gz] and mask_<organ>.nii[.gz]")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--split", default="train", choices=["train", "validation", "test"])
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("train", help="run online interactive training")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--config", type=Path, default=None, help="JSON training config")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="simulated-clinician evaluation")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--clicks", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--plots", action="store_true")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("serve", help="run the revision HTTP service")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--ttl", type=float, default=3600.0)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
