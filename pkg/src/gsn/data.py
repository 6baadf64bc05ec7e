"""Dataset manifests (``labels.csv`` + images) and the synthetic texture generator."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import IngestionError
from .numerics import SeededRng

SYNTH_CLASSES = ("hstripes", "vstripes", "checkerboard", "radial")
NOISE_AMPLITUDE = 0.05


@dataclass(frozen=True)
class DatasetManifest:
    root: Path
    entries: tuple  # ((image path, class name), ...) sorted by filename
    class_to_id: dict

    @property
    def class_names(self) -> list[str]:
        return sorted(self.class_to_id, key=self.class_to_id.get)

    @property
    def paths(self) -> list[Path]:
        return [p for p, _ in self.entries]

    @property
    def labels(self) -> list[int]:
        return [self.class_to_id[c] for _, c in self.entries]

    def subset(self, keep) -> "DatasetManifest":
        return DatasetManifest(self.root, tuple(self.entries[i] for i in keep), self.class_to_id)


def load_dataset(root) -> DatasetManifest:
    root = Path(root)
    csv_path = root / "labels.csv"
    if not csv_path.is_file():
        raise IngestionError(f"{csv_path}: file not found")
    with open(csv_path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["filename", "label"]:
        raise IngestionError(f"{csv_path}:1: header must be 'filename,label'")
    seen: dict[str, int] = {}
    entries = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2 or not row[0].strip() or not row[1].strip():
            raise IngestionError(f"{csv_path}:{lineno}: expected 'filename,label'")
        name, label = row[0].strip(), row[1].strip()
        if name in seen:
            raise IngestionError(f"{csv_path}:{lineno}: duplicate filename {name!r} (first at line {seen[name]})")
        seen[name] = lineno
        path = root / name
        if not path.is_file():
            raise IngestionError(f"{csv_path}:{lineno}: image {name!r} not found")
        entries.append((path, label))
    if not entries:
        raise IngestionError(f"{csv_path}: no samples")
    entries.sort(key=lambda e: e[0].name)
    class_to_id = {c: i for i, c in enumerate(sorted({c for _, c in entries}))}
    return DatasetManifest(root, tuple(entries), class_to_id)


def _two_colors(rng):
    dark = rng.uniform(0.0, 0.4, 3)
    light = rng.uniform(0.6, 1.0, 3)
    return (dark, light) if rng.random() < 0.5 else (light, dark)


def synth_image(kind: str, size: int, rng: SeededRng) -> np.ndarray:
    """One noisy texture image of the given class, values in [0, 1]."""
    c1, c2 = _two_colors(rng)
    period = rng.uniform(8.0, 16.0)
    phase = rng.uniform(0.0, period)
    rows, cols = np.indices((size, size), dtype=np.float64)
    if kind == "hstripes":
        mask = np.floor((rows + phase) / (period / 2)) % 2
    elif kind == "vstripes":
        mask = np.floor((cols + phase) / (period / 2)) % 2
    elif kind == "checkerboard":
        mask = (np.floor((rows + phase) / (period / 2)) + np.floor((cols + phase) / (period / 2))) % 2
    elif kind == "radial":
        cy, cx = rng.uniform(0.3 * size, 0.7 * size, 2)
        r = np.hypot(rows - cy, cols - cx)
        mask = r / r.max()
    else:
        raise ValueError(f"unknown synthetic class {kind!r}")
    img = c1 * (1 - mask[..., None]) + c2 * mask[..., None]
    img = img + rng.uniform(-NOISE_AMPLITUDE, NOISE_AMPLITUDE, img.shape)
    return np.clip(img, 0.0, 1.0)


def _write_split(out_dir: Path, kinds, per_class, size, rng):
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for kind in kinds:
        for i in range(per_class):
            name = f"{kind}_{i:04d}.png"
            img = synth_image(kind, size, rng)
            Image.fromarray(np.round(img * 255).astype(np.uint8), "RGB").save(out_dir / name, optimize=False)
            rows.append((name, kind))
    with open(out_dir / "labels.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["filename", "label"])
        w.writerows(sorted(rows))


def gen_synth(out_dir, classes: int = 4, per_class: int = 50, image_size: int = 64, seed: int = 0,
              test_per_class: int = 0) -> None:
    """Write a synthetic texture dataset.

    Classes are taken in the order hstripes, vstripes, checkerboard, radial,
    so ``classes=2`` gives the two stripe classes. With ``test_per_class``
    the output has ``train/`` and ``test/`` subdirectories.
    """
    if not 2 <= classes <= len(SYNTH_CLASSES):
        raise IngestionError(f"classes must be in [2, {len(SYNTH_CLASSES)}], got {classes}")
    if per_class < 1 or image_size < 8:
        raise IngestionError("need per_class >= 1 and image_size >= 8")
    out = Path(out_dir)
    kinds = SYNTH_CLASSES[:classes]
    rng = SeededRng(seed)
    try:
        if test_per_class > 0:
            _write_split(out / "train", kinds, per_class, image_size, rng.spawn(0))
            _write_split(out / "test", kinds, test_per_class, image_size, rng.spawn(1))
        else:
            _write_split(out, kinds, per_class, image_size, rng.spawn(0))
    except OSError as exc:
        raise OSError(f"cannot write dataset to {out}: {exc}") from exc
