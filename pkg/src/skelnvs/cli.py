"""Command-line driver for the experiment lifecycle.

Every subcommand that produces artifacts writes its effective config snapshot
(`config.json`) before doing any work, so a run directory can be replayed:
deleting the outputs and re-running against the snapshot reproduces them
byte-for-byte. Wall-clock timestamps live only in `run_meta.json`.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import datetime
import json
import sys
from pathlib import Path

import numpy as np

from .codec import CodecCheckpoint, train_codec
from .config import (
    ExperimentConfig,
    UNET_MODES,
    config_to_json,
    load_config,
    save_config,
)
from .errors import ConfigurationError, DataError, NumericsError
from .evalkit import (
    FeatureNetSpec,
    compare_models,
    iou_binned_improvement,
    line_plot_svg,
    make_report,
    records_from_csv,
    records_from_images,
    records_to_csv,
)
from .scenegen.dataset import generate_dataset, load_image, load_manifest, save_image
from .training import generate_split, train_denoiser
from .unet import DenoiserCheckpoint


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the documented contract is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _load_experiment(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg.validate()
    if getattr(args, "device", "cpu") != "cpu":
        raise ConfigurationError(
            f"device {args.device!r} unavailable: this implementation is CPU-only"
        )
    return cfg


def _start_run(args, cfg: ExperimentConfig, out: Path) -> Path:
    """Create the run directory and write the snapshot + metadata files."""
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.json")
    meta = {
        "command": args.command,
        "argv": sys.argv[1:],
        "device": getattr(args, "device", "cpu"),
        "timestamp_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "python": sys.version.split()[0],
    }
    (out / "run_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return out


def _target_entries(manifest, split: str):
    """(target_id, target dict) pairs for one split, manifest order."""
    out = []
    for rec in manifest.split_records(split):
        rid = f"{rec['object_id']}/frame_{rec['frame_index']:02d}"
        for j, tgt in enumerate(rec["targets"]):
            out.append((f"{rid}/tgt_{j}", tgt))
    return out


def _save_generated(images: dict[str, np.ndarray], raw_dir: Path) -> None:
    for tid, img in images.items():
        path = raw_dir / f"{tid}.png"
        path.parent.mkdir(parents=True, exist_ok=True)
        save_image(img, path)


def _load_generated(raw_dir: Path, target_ids: list[str]) -> dict[str, np.ndarray]:
    images = {}
    for tid in target_ids:
        path = raw_dir / f"{tid}.png"
        if not path.exists():
            raise DataError(f"generated image missing: {path}")
        images[tid] = load_image(path)
    return images


def _featnet_spec(cfg: ExperimentConfig) -> FeatureNetSpec:
    ev = cfg.evaluation
    return FeatureNetSpec(
        seed=ev.featnet_seed, widths=tuple(ev.featnet_widths), strides=tuple(ev.featnet_strides)
    )


# ---------------------------------------------------------------- subcommands


def cmd_print_config(args) -> int:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg.validate()
    text = config_to_json(cfg)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_gen_data(args) -> int:
    cfg = _load_experiment(args)
    if args.seed is not None:
        cfg.dataset.seed = args.seed
    out = _start_run(args, cfg, Path(args.out))
    manifest = generate_dataset(cfg.dataset, out)
    n_train = len(manifest.split_records("train"))
    n_test = len(manifest.split_records("test"))
    print(f"wrote {len(manifest.records)} records ({n_train} train / {n_test} test) to {out}")
    return 0


def cmd_train_codec(args) -> int:
    cfg = _load_experiment(args)
    if args.seed is not None:
        cfg.codec.seed = args.seed
    manifest = load_manifest(args.data)
    out = _start_run(args, cfg, Path(args.out))
    ckpt = train_codec(manifest, cfg.codec)
    path = out / "codec.ckpt"
    ckpt.save(path)
    print(f"codec: {ckpt.meta['steps']} steps, train PSNR {ckpt.meta['final_train_psnr']:.2f} dB -> {path}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_experiment(args)
    if args.seed is not None:
        cfg.training.seed = args.seed
    if args.mode is not None:
        cfg.unet.mode = args.mode
        cfg.unet.validate()
    manifest = load_manifest(args.data)
    codec = CodecCheckpoint.load(args.codec)
    out = _start_run(args, cfg, Path(args.out))
    ckpt = train_denoiser(
        manifest,
        codec,
        cfg,
        out,
        warm_start=args.warm_start,
        resume=args.resume,
        codec_ref=str(args.codec),
    )
    print(
        f"trained mode={cfg.unet.mode}: {ckpt.meta['opt_steps']} optimizer steps, "
        f"{ckpt.meta['epochs_run']} epochs -> {out / 'denoiser.ckpt'}"
    )
    return 0


def _panel(manifest, record: dict, generated: dict[str, np.ndarray]) -> np.ndarray:
    """One row per target: source | target | skeleton | generated."""
    rid = f"{record['object_id']}/frame_{record['frame_index']:02d}"
    src = load_image(manifest.root / record["source"]["file"])
    pad, rows = 2, []
    for j, tgt in enumerate(record["targets"]):
        cols = [
            src,
            load_image(manifest.root / tgt["image"]),
            load_image(manifest.root / tgt["skeleton"]),
            generated[f"{rid}/tgt_{j}"],
        ]
        h = cols[0].shape[0]
        strip = np.ones((h, pad, 3))
        row = cols[0]
        for c in cols[1:]:
            row = np.concatenate([row, strip, c], axis=1)
        rows.append(row)
    gap = np.ones((pad, rows[0].shape[1], 3))
    panel = rows[0]
    for r in rows[1:]:
        panel = np.concatenate([panel, gap, r], axis=0)
    return panel


def cmd_sample(args) -> int:
    cfg = _load_experiment(args)
    sampler = cfg.evaluation.sampler
    if args.seed is not None:
        sampler.seed = args.seed
    manifest = load_manifest(args.data)
    codec = CodecCheckpoint.load(args.codec)
    ckpt = DenoiserCheckpoint.load(args.ckpt)
    if ckpt.latent_channels != codec.latent_channels:
        raise DataError(
            f"checkpoint expects {ckpt.latent_channels} latent channels, "
            f"codec provides {codec.latent_channels}"
        )
    sampler.validate(ckpt.diffusion.timesteps)
    out = _start_run(args, cfg, Path(args.out))

    def progress(i, total):
        print(f"sampling record {i + 1}/{total}", file=sys.stderr, flush=True)

    images = generate_split(
        manifest, codec, ckpt, sampler, split=args.split, limit=args.limit, progress=progress
    )
    _save_generated(images, out / "raw")
    n_panels = 0
    if not args.no_panels:
        panel_dir = out / "panels"
        panel_dir.mkdir(exist_ok=True)
        for rec in manifest.split_records(args.split)[: args.limit]:
            name = f"{rec['object_id']}_frame_{rec['frame_index']:02d}.png"
            save_image(_panel(manifest, rec, images), panel_dir / name)
            n_panels += 1
    print(f"wrote {len(images)} generated images and {n_panels} panels to {out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_experiment(args)
    if args.seed is not None:
        cfg.evaluation.featnet_seed = args.seed
    manifest = load_manifest(args.data)
    entries = _target_entries(manifest, args.split)
    if not entries:
        raise DataError(f"manifest has no {args.split!r} records")
    references = {tid: load_image(manifest.root / t["image"]) for tid, t in entries}
    ious = {tid: float(t["bbox_iou"]) for tid, t in entries}
    generated = _load_generated(Path(args.generated) / "raw", [tid for tid, _ in entries])
    out = _start_run(args, cfg, Path(args.out))

    spec = _featnet_spec(cfg)
    records = records_from_images(generated, references, ious, args.model_tag, spec)
    report = make_report(records, generated, references, spec)
    records_to_csv(records, out / "records.csv")
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    means = "  ".join(f"{m}={v:.4f}" for m, v in sorted(report.means.items()))
    print(f"{args.model_tag}: n={report.count}  {means}  fid={report.fid:.4f}")
    return 0


def cmd_compare(args) -> int:
    records_a = records_from_csv(args.a)
    records_b = records_from_csv(args.b)
    report = compare_models(records_a, records_b)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"A={report.model_a} vs B={report.model_b} (n={report.count})")
    for metric, test in sorted(report.tests.items()):
        print(
            f"  {metric:5s} meanA={report.mean_a[metric]:.4f} meanB={report.mean_b[metric]:.4f} "
            f"delta={report.mean_delta[metric]:+.4f} U={test['U']:.1f} p={test['p']:.4g} ({test['method']})"
        )
    sig = sorted(report.significant_05)
    print(f"  significant at 0.05: {', '.join(sig) if sig else 'none'}")
    return 0


def cmd_skeleton_quality(args) -> int:
    cfg = _load_experiment(args)
    if args.seed is not None:
        cfg.evaluation.bootstrap_seed = args.seed
    manifest = load_manifest(args.data)
    for rec in manifest.split_records(args.split):
        for tgt in rec["targets"]:
            if "degradation_level" not in tgt or "bbox_iou" not in tgt:
                raise DataError(
                    f"manifest record {rec['object_id']} lacks skeleton degradation metadata"
                )
    out = _start_run(args, cfg, Path(args.out))

    if args.records_a and args.records_b:
        records_a = records_from_csv(args.records_a)
        records_b = records_from_csv(args.records_b)
    elif args.ckpt_a and args.ckpt_b and args.codec:
        entries = _target_entries(manifest, args.split)
        references = {tid: load_image(manifest.root / t["image"]) for tid, t in entries}
        ious = {tid: float(t["bbox_iou"]) for tid, t in entries}
        codec = CodecCheckpoint.load(args.codec)
        spec = _featnet_spec(cfg)
        records = []
        for tag, path in (("model", args.ckpt_a), ("baseline", args.ckpt_b)):
            ckpt = DenoiserCheckpoint.load(path)
            images = generate_split(manifest, codec, ckpt, cfg.evaluation.sampler, split=args.split)
            _save_generated(images, out / f"raw_{tag}")
            records.append(records_from_images(images, references, ious, tag, spec))
        records_a, records_b = records
    else:
        raise ConfigurationError(
            "skeleton-quality needs either --records-a/--records-b or --codec/--ckpt-a/--ckpt-b"
        )

    ev = cfg.evaluation
    result = iou_binned_improvement(
        records_a,
        records_b,
        bins=ev.iou_bins,
        n_boot=ev.bootstrap_samples,
        seed=ev.bootstrap_seed,
    )
    (out / "quality.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")

    metrics = sorted(result["spearman"])
    fmt = lambda v: "" if v is None else f"{v:.6f}"
    with open(out / "quality.csv", "w") as fh:
        header = ["bin", "iou_lo", "iou_hi", "iou_center", "count"]
        for m in metrics:
            header += [f"{m}_mean", f"{m}_se"]
        fh.write(",".join(header) + "\n")
        for i, b in enumerate(result["bins"]):
            row = [str(i), f"{b['lo']:.4f}", f"{b['hi']:.4f}", f"{b['center']:.4f}", str(b["count"])]
            for m in metrics:
                row += [fmt(b["metrics"][m]["mean"]), fmt(b["metrics"][m]["se"])]
            fh.write(",".join(row) + "\n")

    series = []
    for m in metrics:
        xs, ys, errs = [], [], []
        for b in result["bins"]:
            if b["count"] > 0:
                xs.append(b["center"])
                ys.append(b["metrics"][m]["mean"])
                errs.append(b["metrics"][m]["se"] or 0.0)
        if xs:
            series.append({"label": m, "x": xs, "y": ys, "err": errs})
    line_plot_svg(
        series,
        out / "improvement.svg",
        title="improvement vs skeleton bbox IoU",
        xlabel="bbox IoU (bin center)",
        ylabel="normalized improvement",
    )
    corr = "  ".join(
        f"{m}={result['spearman'][m]:+.3f}" for m in metrics if result["spearman"][m] is not None
    )
    print(f"spearman(bin IoU, improvement): {corr or 'undefined (too few bins)'}")
    print(f"wrote quality.json, quality.csv, improvement.svg to {out}")
    return 0


# --------------------------------------------------------------------- parser


def build_parser() -> _Parser:
    parser = _Parser(prog="skelnvs", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(name, func, help_text, out_required=True):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", help="experiment config JSON (defaults used if omitted)")
        p.add_argument("--seed", type=int, default=None, help="override the command's seed")
        p.add_argument("--device", default="cpu", help="compute device (cpu)")
        if out_required:
            p.add_argument("--out", required=True, help="output run directory")
        return p

    p = sub.add_parser("print-config", help="emit the effective config JSON")
    p.set_defaults(func=cmd_print_config)
    p.add_argument("--config", help="config to normalize (defaults if omitted)")
    p.add_argument("--out", help="write to file instead of stdout")

    add("gen-data", cmd_gen_data, "render the procedural dataset")

    p = add("train-codec", cmd_train_codec, "train the stage-1 autoencoder")
    p.add_argument("--data", required=True, help="dataset directory (with manifest.json)")

    p = add("train", cmd_train, "train the stage-2 denoiser")
    p.add_argument("--data", required=True)
    p.add_argument("--codec", required=True, help="codec checkpoint path")
    p.add_argument("--mode", choices=UNET_MODES, default=None, help="override unet.mode")
    p.add_argument("--warm-start", default=None, help="initialize shared weights from checkpoint")
    p.add_argument("--resume", default=None, help="resume training from checkpoint")

    p = add("sample", cmd_sample, "generate images for a split")
    p.add_argument("--data", required=True)
    p.add_argument("--codec", required=True)
    p.add_argument("--ckpt", required=True, help="denoiser checkpoint path")
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--limit", type=int, default=None, help="cap the number of records")
    p.add_argument("--no-panels", action="store_true", help="skip panel images")

    p = add("evaluate", cmd_evaluate, "score generated images against references")
    p.add_argument("--data", required=True)
    p.add_argument("--generated", required=True, help="sample run directory (contains raw/)")
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--model-tag", default="model", help="model name recorded per row")

    p = sub.add_parser("compare", help="direction-aware significance tests between two record sets")
    p.set_defaults(func=cmd_compare)
    p.add_argument("--a", required=True, help="records.csv for the candidate model")
    p.add_argument("--b", required=True, help="records.csv for the baseline model")
    p.add_argument("--out", required=True)

    p = add("skeleton-quality", cmd_skeleton_quality, "bin improvement by skeleton bbox IoU")
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--records-a", default=None, help="precomputed records.csv (model)")
    p.add_argument("--records-b", default=None, help="precomputed records.csv (baseline)")
    p.add_argument("--codec", default=None)
    p.add_argument("--ckpt-a", default=None, help="model checkpoint (sampled if records not given)")
    p.add_argument("--ckpt-b", default=None, help="baseline checkpoint")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_help()
            return 1
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NumericsError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (DataError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
