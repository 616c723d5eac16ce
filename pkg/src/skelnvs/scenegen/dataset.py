"""Dataset rendering, on-disk layout, and the JSON manifest.

Layout under the output root:

    {train,test}/<object_id>/frame_<f>/{src.png, tgt_<j>.png, skel_<j>.png}
    manifest.json

Generation is a pure function of (config, seed): rerunning produces
byte-identical PNGs and manifest.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ..config import DatasetConfig
from ..errors import DataError
from .camera import CameraPose
from .quality import compute_bbox_iou, degrade_skeleton
from .raster import render_view
from .rig import ArticulatedObject, sample_object

SCHEMA_VERSION = 1


def quantize(img: np.ndarray) -> np.ndarray:
    """Round to the 8-bit grid a PNG round-trip would produce."""
    return np.clip(np.rint(img * 255.0), 0, 255) / 255.0


def save_image(img: np.ndarray, path: Path) -> None:
    arr = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def load_image(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


@dataclass
class DatasetManifest:
    schema_version: int
    config: dict
    records: list[dict]
    root: Path

    def save(self) -> Path:
        path = self.root / "manifest.json"
        payload = {
            "schema_version": self.schema_version,
            "config": self.config,
            "records": self.records,
        }
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return path

    def split_records(self, split: str) -> list[dict]:
        return [r for r in self.records if r["split"] == split]

    def image_paths(self) -> list[Path]:
        paths = []
        for rec in self.records:
            paths.append(self.root / rec["source"]["file"])
            for tgt in rec["targets"]:
                paths.append(self.root / tgt["image"])
                paths.append(self.root / tgt["skeleton"])
        return paths


def load_manifest(root: str | Path, check_files: bool = True) -> DatasetManifest:
    root = Path(root)
    path = root / "manifest.json"
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    payload = json.loads(path.read_text())
    manifest = DatasetManifest(
        schema_version=payload["schema_version"],
        config=payload["config"],
        records=payload["records"],
        root=root,
    )
    if check_files:
        for p in manifest.image_paths():
            if not p.exists():
                raise DataError(f"manifest references missing file: {p}")
    return manifest


def _object_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([master_seed % 2**64, index]).generate_state(1, np.uint64)[0])


def _sample_cameras(cfg: DatasetConfig, master_seed: int, obj_idx: int, frame_index: int) -> list[CameraPose]:
    rng = np.random.default_rng(np.random.SeedSequence([master_seed % 2**64, obj_idx, frame_index, 101]))
    base = rng.uniform(0.0, 2.0 * np.pi)
    cams = []
    for k in range(cfg.views_per_frame):
        azimuth = (base + 2.0 * np.pi * k / cfg.views_per_frame) % (2.0 * np.pi)
        elevation = rng.uniform(cfg.elevation_min, cfg.elevation_max)
        cams.append(
            CameraPose(
                azimuth=azimuth,
                elevation=elevation,
                radius=cfg.camera_radius,
                focal=cfg.focal,
                height=cfg.image_size,
                width=cfg.image_size,
            )
        )
    return cams


def generate_dataset(cfg: DatasetConfig, out_dir: str | Path) -> DatasetManifest:
    """Render every (object, frame) sample and write images plus manifest.

    Frames 0, k, 2k, ... below the frame budget are rendered from
    views_per_frame orbit cameras; camera 0 is the source view, the rest are
    targets with paired skeleton renders. Target degradation levels cycle
    through cfg.degradation_levels in generation order. Train and test object
    ids are disjoint.
    """
    cfg.validate()
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / ".write_probe").write_bytes(b"")
        (out / ".write_probe").unlink()
    except OSError as exc:
        raise DataError(f"output directory not writable: {out}: {exc}") from exc

    n_test = int(round(cfg.split * cfg.objects))
    n_train = cfg.objects - n_test
    frames = list(range(0, cfg.frame_budget, cfg.frame_stride))
    levels = cfg.degradation_levels
    records: list[dict] = []
    target_counter = 0

    for obj_idx in range(cfg.objects):
        split = "train" if obj_idx < n_train else "test"
        obj_seed = _object_seed(cfg.seed, obj_idx)
        obj = sample_object(obj_seed, cfg.generator)
        object_id = f"obj{obj_idx:04d}"

        for frame_index in frames:
            cams = _sample_cameras(cfg, cfg.seed, obj_idx, frame_index)
            rel_dir = Path(split) / object_id / f"frame_{frame_index:02d}"
            sample_dir = out / rel_dir
            sample_dir.mkdir(parents=True, exist_ok=True)

            src_img = render_view(obj, frame_index, cams[0], "skin")
            save_image(src_img, sample_dir / "src.png")

            targets = []
            for j, cam in enumerate(cams[1:]):
                tgt_img = render_view(obj, frame_index, cam, "skin")
                level = levels[target_counter % len(levels)]
                target_counter += 1
                skel_seed = int(
                    np.random.SeedSequence(
                        [cfg.seed % 2**64, obj_idx, frame_index, j, 202]
                    ).generate_state(1, np.uint64)[0]
                )
                skel_img = degrade_skeleton(obj, frame_index, cam, level, skel_seed)
                save_image(tgt_img, sample_dir / f"tgt_{j}.png")
                save_image(skel_img, sample_dir / f"skel_{j}.png")
                # IoU on the quantized pixels so it is recomputable from the PNGs
                iou = compute_bbox_iou(quantize(tgt_img), quantize(skel_img))
                targets.append(
                    {
                        "image": str(rel_dir / f"tgt_{j}.png"),
                        "skeleton": str(rel_dir / f"skel_{j}.png"),
                        "camera": cam.to_dict(),
                        "bbox_iou": iou,
                        "degradation_level": float(level),
                        "skeleton_seed": skel_seed,
                    }
                )

            records.append(
                {
                    "object_id": object_id,
                    "object_seed": obj_seed,
                    "frame_index": frame_index,
                    "split": split,
                    "source": {
                        "file": str(rel_dir / "src.png"),
                        "camera": cams[0].to_dict(),
                    },
                    "targets": targets,
                }
            )

    records.sort(key=lambda r: (r["object_id"], r["frame_index"]))
    manifest = DatasetManifest(
        schema_version=SCHEMA_VERSION,
        config=asdict(cfg),
        records=records,
        root=out,
    )
    manifest.save()
    return manifest


def regenerate_object(record: dict, cfg: DatasetConfig) -> ArticulatedObject:
    return sample_object(record["object_seed"], cfg.generator)
