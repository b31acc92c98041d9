"""Deterministic synthetic image sets.

In-distribution classes are fixed geometric templates (bars, diagonals,
crosses, rings, corner blobs) drawn on a square grayscale canvas, plus
Gaussian pixel noise. Out-of-distribution images come from separate template
families (checkerboards, gratings, circles, speckle, scattered small squares) that share
no identifiers with the class templates.

Dataset file layout (UTF-8 text, ``\\n`` line ends)::

    {"format": "xensemble-dataset", "version": 1, "name": ..., "kind": ...,
     "shape": [side, side], "num_classes": K, "count": n}
    <label>\\t<base64 of n_pixels little-endian float64>
    ...

The header is one JSON line. Each following line is one image in row-major
order; OOD images carry ``-`` in the label field.
"""

from __future__ import annotations

import base64
import binascii
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

DATASET_FORMAT = "xensemble-dataset"
DATASET_VERSION = 1
IN_DISTRIBUTION = "in-distribution"
OUT_OF_DISTRIBUTION = "out-of-distribution"

BACKGROUND = 0.2
FOREGROUND = 0.8


class DatasetFormatError(ValueError):
    def __init__(self, message: str, offset: Optional[int] = None):
        self.offset = offset
        where = f" at byte offset {offset}" if offset is not None else ""
        super().__init__(f"{message}{where}")


class UnsupportedVersionError(DatasetFormatError):
    pass


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # (n, side, side)
    labels: Optional[np.ndarray]
    num_classes: int
    name: str
    kind: str = IN_DISTRIBUTION

    def __post_init__(self):
        images = np.array(self.images, dtype=np.float64)
        if images.ndim != 3 or images.shape[0] == 0:
            raise ValueError("images must be a nonempty (n, h, w) array")
        if images.min() < 0.0 or images.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")
        if self.kind not in (IN_DISTRIBUTION, OUT_OF_DISTRIBUTION):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        labels = self.labels
        if self.kind == IN_DISTRIBUTION:
            if labels is None:
                raise ValueError("in-distribution datasets need labels")
            labels = np.array(labels, dtype=np.int64)
            if labels.shape != (images.shape[0],):
                raise ValueError("labels must align with images")
            labels.setflags(write=False)
        elif labels is not None:
            raise ValueError("out-of-distribution datasets carry no labels")
        images.setflags(write=False)
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def side(self) -> int:
        return self.images.shape[1]

    @property
    def flat(self) -> np.ndarray:
        return self.images.reshape(len(self), -1)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        labels = None if self.labels is None else self.labels[idx]
        return Dataset(self.images[idx], labels, self.num_classes, self.name, self.kind)


# --- templates ----------------------------------------------------------------

def _canvas(side: int) -> np.ndarray:
    return np.full((side, side), BACKGROUND)


def _thick(side: int) -> int:
    return max(1, side // 8)


def _hbar(frac: float) -> Callable[[int], np.ndarray]:
    def draw(side):
        img, t = _canvas(side), _thick(side)
        r = min(side - t, int(round(frac * (side - t))))
        img[r:r + t, :] = FOREGROUND
        return img
    return draw


def _vbar(frac: float) -> Callable[[int], np.ndarray]:
    def draw(side):
        return _hbar(frac)(side).T.copy()
    return draw


def _diag(anti: bool) -> Callable[[int], np.ndarray]:
    def draw(side):
        img, t = _canvas(side), _thick(side)
        r, c = np.indices((side, side))
        d = np.abs(r - (side - 1 - c)) if anti else np.abs(r - c)
        img[d < t] = FOREGROUND
        return img
    return draw


def _plus(side):
    return np.maximum(_hbar(0.5)(side), _vbar(0.5)(side))


def _xcross(side):
    return np.maximum(_diag(False)(side), _diag(True)(side))


def _ring(side):
    img, t = _canvas(side), _thick(side)
    m = side // 4
    img[m:side - m, m:side - m] = FOREGROUND
    img[m + t:side - m - t, m + t:side - m - t] = BACKGROUND
    return img


def _blob(row_frac: float, col_frac: float) -> Callable[[int], np.ndarray]:
    def draw(side):
        img = _canvas(side)
        r, c = np.indices((side, side))
        cr, cc = row_frac * (side - 1), col_frac * (side - 1)
        rad = side / 6.0
        img[(r - cr) ** 2 + (c - cc) ** 2 <= rad ** 2] = FOREGROUND
        return img
    return draw


def _center_square(side):
    img = _canvas(side)
    q = side // 3
    img[q:side - q, q:side - q] = FOREGROUND
    return img


CLASS_TEMPLATES: dict[str, Callable[[int], np.ndarray]] = {
    "hbar-top": _hbar(0.15),
    "hbar-mid": _hbar(0.5),
    "hbar-bottom": _hbar(0.85),
    "vbar-left": _vbar(0.15),
    "vbar-mid": _vbar(0.5),
    "vbar-right": _vbar(0.85),
    "diag": _diag(False),
    "antidiag": _diag(True),
    "plus": _plus,
    "ring": _ring,
    "blob-tl": _blob(0.2, 0.2),
    "blob-tr": _blob(0.2, 0.8),
    "blob-bl": _blob(0.8, 0.2),
    "blob-br": _blob(0.8, 0.8),
    "center-square": _center_square,
    "xcross": _xcross,
}
CLASS_TEMPLATE_IDS = tuple(CLASS_TEMPLATES)
MAX_CLASSES = len(CLASS_TEMPLATE_IDS)


def _ood_checker(side, rng):
    cell = int(rng.integers(1, max(2, side // 4) + 1))
    r, c = np.indices((side, side))
    phase = int(rng.integers(0, 2))
    return np.where(((r // cell + c // cell + phase) % 2) == 0, 0.9, 0.1)


def _ood_grating(side, rng):
    theta = rng.uniform(0, np.pi)
    freq = rng.uniform(1.5, 4.0) * 2 * np.pi / side
    r, c = np.indices((side, side))
    return 0.5 + 0.4 * np.sin(freq * (r * np.cos(theta) + c * np.sin(theta)) + rng.uniform(0, 2 * np.pi))


def _ood_circles(side, rng):
    r, c = np.indices((side, side))
    cr, cc = rng.uniform(0, side - 1, size=2)
    dist = np.hypot(r - cr, c - cc)
    period = rng.uniform(2.0, 5.0)
    return np.where((dist // period) % 2 == 0, 0.85, 0.15)


def _ood_speckle(side, rng):
    return rng.uniform(0.0, 1.0, size=(side, side))


def _ood_confetti(side, rng):
    img = np.full((side, side), rng.uniform(0.0, 1.0))
    for _ in range(int(rng.integers(8, 16))):
        r0, c0 = rng.integers(0, side - 1, size=2)
        img[r0:r0 + 2, c0:c0 + 2] = rng.uniform(0.0, 1.0)
    return img


OOD_TEMPLATES = {
    "ood-checker": _ood_checker,
    "ood-grating": _ood_grating,
    "ood-circles": _ood_circles,
    "ood-speckle": _ood_speckle,
    "ood-confetti": _ood_confetti,
}
OOD_TEMPLATE_IDS = tuple(OOD_TEMPLATES)


def class_template(class_index: int, side: int) -> np.ndarray:
    return CLASS_TEMPLATES[CLASS_TEMPLATE_IDS[class_index]](side)


# --- generators -----------------------------------------------------------------

def gen_in_distribution(num_classes: int, per_class: int, side: int, noise_sigma: float,
                        seed: int, name: str = "synth") -> Dataset:
    """Template images with additive Gaussian noise, clipped to [0, 1].

    Images are interleaved by class (image i has label i % K), so any prefix
    of the set is close to class-balanced.
    """
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    if num_classes > MAX_CLASSES:
        raise ValueError(f"num_classes={num_classes} exceeds the {MAX_CLASSES} available templates")
    if side < 4:
        raise ValueError("side must be >= 4")
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    rng = np.random.default_rng(seed)
    templates = np.stack([class_template(k, side) for k in range(num_classes)])
    labels = np.tile(np.arange(num_classes), per_class)
    noise = rng.normal(0.0, 1.0, size=(labels.shape[0], side, side)) * noise_sigma
    images = np.clip(templates[labels] + noise, 0.0, 1.0)
    return Dataset(images, labels, num_classes, name, IN_DISTRIBUTION)


def gen_ood(side: int, n: int, seed: int, num_classes: int = 10, name: str = "synth-ood") -> Dataset:
    """Images from families disjoint from every class template, cycled in order."""
    if side < 4:
        raise ValueError("side must be >= 4")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    images = np.empty((n, side, side))
    for i in range(n):
        images[i] = np.clip(OOD_TEMPLATES[OOD_TEMPLATE_IDS[i % len(OOD_TEMPLATE_IDS)]](side, rng), 0.0, 1.0)
    return Dataset(images, None, num_classes, name, OUT_OF_DISTRIBUTION)


# --- file format ------------------------------------------------------------------

def dumps_dataset(ds: Dataset) -> bytes:
    header = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "name": ds.name,
        "kind": ds.kind,
        "shape": list(ds.images.shape[1:]),
        "num_classes": ds.num_classes,
        "count": len(ds),
    }
    lines = [json.dumps(header, sort_keys=True)]
    for i in range(len(ds)):
        label = "-" if ds.labels is None else str(int(ds.labels[i]))
        blob = base64.b64encode(ds.images[i].astype("<f8").tobytes()).decode("ascii")
        lines.append(f"{label}\t{blob}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def loads_dataset(data: bytes) -> Dataset:
    lines = data.split(b"\n")
    offsets = np.cumsum([0] + [len(l) + 1 for l in lines[:-1]]).tolist()
    try:
        header = json.loads(lines[0].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DatasetFormatError(f"bad header: {exc}", 0) from None
    if not isinstance(header, dict) or header.get("format") != DATASET_FORMAT:
        raise DatasetFormatError("not a dataset file", 0)
    if header.get("version") != DATASET_VERSION:
        raise UnsupportedVersionError(f"unsupported dataset version {header.get('version')!r}", 0)
    try:
        shape = tuple(int(s) for s in header["shape"])
        count = int(header["count"])
        kind = header["kind"]
        num_classes = int(header["num_classes"])
        name = str(header["name"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"header field problem: {exc}", 0) from None
    n_pix = int(np.prod(shape))
    body = lines[1:]
    # A well-formed file ends with a newline, leaving one empty trailing element.
    if len(body) < count + 1 or any(body[count:]):
        raise DatasetFormatError(f"expected {count} image rows", offsets[min(len(lines) - 1, count + 1)])
    images = np.empty((count,) + shape)
    labels = [] if kind == IN_DISTRIBUTION else None
    for i in range(count):
        line, off = body[i], offsets[i + 1]
        parts = line.split(b"\t")
        if len(parts) != 2:
            raise DatasetFormatError(f"row {i}: expected '<label>\\t<data>'", off)
        try:
            raw = base64.b64decode(parts[1], validate=True)
        except (binascii.Error, ValueError):
            raise DatasetFormatError(f"row {i}: bad base64 data", off + len(parts[0]) + 1) from None
        if len(raw) != 8 * n_pix:
            raise DatasetFormatError(f"row {i}: expected {n_pix} pixels, got {len(raw) / 8:g}", off)
        images[i] = np.frombuffer(raw, dtype="<f8").reshape(shape)
        if labels is not None:
            try:
                labels.append(int(parts[0]))
            except ValueError:
                raise DatasetFormatError(f"row {i}: bad label {parts[0]!r}", off) from None
    try:
        return Dataset(images, labels, num_classes, name, kind)
    except ValueError as exc:
        raise DatasetFormatError(str(exc)) from None


def save_dataset(ds: Dataset, path) -> None:
    Path(path).write_bytes(dumps_dataset(ds))


def load_dataset(path) -> Dataset:
    return loads_dataset(Path(path).read_bytes())
