"""Input denoisers and their naming scheme.

Canonical names::

    quan-<i>-bit          colour-depth reduction to 2**i levels
    medFilter-<k>*<k>     k x k median filter, reflect padding
    NLM-<a>-<b>-<c>       non-local means: a x a search, b x b patch, strength c
    rotation_<d>          rotate by d degrees (counter-clockwise), bilinear

``parse_denoiser`` also accepts the short spellings ``med_k*k``, ``med-k*k``,
``medfilter-k*k`` and ``rot_d``; they normalise to the canonical form.

All filters take and return 2-d arrays with values in [0, 1]. Intensity
comparisons (quantisation levels, NLM patch distances) happen on the 0-255
scale.

Padding convention: "reflect" here means the edge pixel is repeated
(``d c b a | a b c d``), numpy's ``symmetric`` mode. Even median windows put
the output pixel at the top-left of the window's central 2x2 block.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

KINDS = ("quantize", "median", "nlm", "rotate")


class DenoiserParseError(ValueError):
    def __init__(self, message: str, token: str):
        self.token = token
        super().__init__(f"{message}: {token!r}")


def _fmt_num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


@dataclass(frozen=True)
class DenoiserSpec:
    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown denoiser kind {self.kind!r}")
        p = self.params
        if self.kind == "quantize" and not 1 <= p[0] <= 8:
            raise ValueError("quantize bits must be in [1, 8]")
        if self.kind == "median" and p[0] < 1:
            raise ValueError("median window must be >= 1")
        if self.kind == "nlm":
            a, b, c = p
            if not (a > b >= 1 and a % 2 == 1 and b % 2 == 1 and c > 0):
                raise ValueError("NLM needs odd a > odd b >= 1 and c > 0")
        if self.kind == "rotate" and not -180 <= p[0] <= 180:
            raise ValueError("rotation degrees must be in [-180, 180]")

    @property
    def canonical_name(self) -> str:
        p = self.params
        if self.kind == "quantize":
            return f"quan-{p[0]}-bit"
        if self.kind == "median":
            return f"medFilter-{p[0]}*{p[0]}"
        if self.kind == "nlm":
            return f"NLM-{p[0]}-{p[1]}-{_fmt_num(p[2])}"
        return f"rotation_{_fmt_num(p[0])}"

    def __str__(self) -> str:
        return self.canonical_name

    def check_image(self, side: int) -> None:
        if self.kind == "median" and self.params[0] > side:
            raise ValueError(f"median window {self.params[0]} exceeds image side {side}")

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "quantize":
            return quantize(x, self.params[0])
        if self.kind == "median":
            return median_filter(x, self.params[0])
        if self.kind == "nlm":
            return nlm(x, *self.params)
        return rotate(x, self.params[0])


_NUM = r"[+-]?\d+(?:\.\d+)?"
_PATTERNS = [
    ("quantize", re.compile(r"quan-(\d+)-bit")),
    ("median", re.compile(r"(?:medFilter|medfilter|med)[-_](\d+)\*(\d+)")),
    ("nlm", re.compile(rf"NLM-(\d+)-(\d+)-({_NUM})")),
    ("rotate", re.compile(rf"(?:rotation|rot)_({_NUM})")),
]


def _num(text: str):
    v = float(text)
    return int(v) if v.is_integer() and "." not in text else v


def parse_denoiser(name: str, side: Optional[int] = None) -> DenoiserSpec:
    """Parse a denoiser name; ``side`` additionally validates window sizes."""
    token = name.strip()
    for kind, pat in _PATTERNS:
        m = pat.fullmatch(token)
        if not m:
            continue
        g = m.groups()
        if kind == "median":
            if g[0] != g[1]:
                raise DenoiserParseError("median window must be square", token)
            params = (int(g[0]),)
        elif kind == "nlm":
            params = (int(g[0]), int(g[1]), _num(g[2]))
        else:
            params = (_num(g[0]),) if kind == "rotate" else (int(g[0]),)
        try:
            spec = DenoiserSpec(kind, params)
            if side is not None:
                spec.check_image(side)
        except ValueError as exc:
            raise DenoiserParseError(str(exc), token) from None
        return spec
    raise DenoiserParseError("unrecognised denoiser name", token)


def parse_denoiser_list(names, side: Optional[int] = None) -> list[DenoiserSpec]:
    """Accepts a list of names or one comma-separated string."""
    if isinstance(names, str):
        names = [n for n in names.split(",") if n.strip()]
    return [parse_denoiser(n, side) for n in names]


def _as_image(x: np.ndarray) -> np.ndarray:
    img = np.asarray(x, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-d image, got shape {img.shape}")
    return img


def quantize(x: np.ndarray, bits: int) -> np.ndarray:
    """Snap each pixel to the nearest of 2**bits levels evenly spanning [0, 255]."""
    if not 1 <= bits <= 8:
        raise ValueError("bits must be in [1, 8]")
    step = 255.0 / (2 ** bits - 1)
    v = np.asarray(x, dtype=np.float64) * 255.0
    idx = np.floor(v / step + 0.5)
    return np.clip(idx * step / 255.0, 0.0, 1.0)


def median_filter(x: np.ndarray, k: int) -> np.ndarray:
    img = _as_image(x)
    if k < 1 or k > min(img.shape):
        raise ValueError(f"median window {k} invalid for image of shape {img.shape}")
    if k == 1:
        return img.copy()
    before, after = (k - 1) // 2, k // 2
    padded = np.pad(img, ((before, after), (before, after)), mode="symmetric")
    windows = sliding_window_view(padded, (k, k))
    return np.median(windows.reshape(img.shape + (k * k,)), axis=-1)


def nlm(x: np.ndarray, a: int, b: int, c: float) -> np.ndarray:
    """Pixelwise non-local means.

    For every candidate centre in the a x a search window, the weight is
    ``exp(-D2 / c**2)`` with D2 the mean squared 0-255 difference between the
    b x b patches; the output is the weighted mean of candidate centres.
    """
    img = _as_image(x)
    if not (a > b >= 1 and a % 2 == 1 and b % 2 == 1):
        raise ValueError("NLM needs odd search size a > odd patch size b")
    if c <= 0:
        raise ValueError("NLM strength c must be > 0")
    ha, hb = a // 2, b // 2
    pad = ha + hb
    h, w = img.shape
    P = np.pad(img * 255.0, pad, mode="symmetric")
    acc = np.zeros_like(img)
    wsum = np.zeros_like(img)
    # patch rows/cols of interest in padded coords: [ha, ha + h + 2hb)
    base = P[ha:ha + h + 2 * hb, ha:ha + w + 2 * hb]
    for dy in range(-ha, ha + 1):
        for dx in range(-ha, ha + 1):
            shifted = P[ha + dy:ha + dy + h + 2 * hb, ha + dx:ha + dx + w + 2 * hb]
            d2 = sliding_window_view((base - shifted) ** 2, (b, b)).mean(axis=(-1, -2))
            wt = np.exp(-d2 / (c * c))
            centre = P[pad + dy:pad + dy + h, pad + dx:pad + dx + w] / 255.0
            acc += wt * centre
            wsum += wt
    return np.clip(acc / wsum, 0.0, 1.0)


def _reflect_index(i: np.ndarray, n: int) -> np.ndarray:
    period = 2 * n
    i = np.mod(i, period)
    return np.where(i >= n, period - 1 - i, i)


def _cos_sin(degrees: float) -> tuple[float, float]:
    if float(degrees) % 90 == 0:
        quarter = int(round(degrees / 90)) % 4
        return [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)][quarter]
    t = math.radians(degrees)
    return math.cos(t), math.sin(t)


def rotate(x: np.ndarray, degrees: float) -> np.ndarray:
    """Counter-clockwise rotation about the image centre.

    Output pixels are bilinearly sampled from the inverse-rotated position;
    samples falling outside the image use reflected indices.
    """
    img = _as_image(x)
    n, m = img.shape
    if n != m:
        raise ValueError(f"rotation needs a square image, got shape {img.shape}")
    if not -180 <= degrees <= 180:
        raise ValueError("rotation degrees must be in [-180, 180]")
    if degrees == 0:
        return img.copy()
    cos_t, sin_t = _cos_sin(degrees)
    centre = (n - 1) / 2.0
    r, col = np.indices((n, n), dtype=np.float64)
    y, xx = r - centre, col - centre
    src_c = cos_t * xx - sin_t * y + centre
    src_r = sin_t * xx + cos_t * y + centre
    r0, c0 = np.floor(src_r), np.floor(src_c)
    fr, fc = src_r - r0, src_c - c0
    r0, c0 = r0.astype(np.int64), c0.astype(np.int64)
    ri = [_reflect_index(r0, n), _reflect_index(r0 + 1, n)]
    ci = [_reflect_index(c0, n), _reflect_index(c0 + 1, n)]
    out = ((1 - fr) * (1 - fc) * img[ri[0], ci[0]] + (1 - fr) * fc * img[ri[0], ci[1]]
           + fr * (1 - fc) * img[ri[1], ci[0]] + fr * fc * img[ri[1], ci[1]])
    return np.clip(out, 0.0, 1.0)


def denoise_ensemble(x: np.ndarray, specs: Sequence[DenoiserSpec]) -> list[np.ndarray]:
    """``[x]`` followed by one cleaned copy per spec, in order."""
    if not specs:
        raise ValueError("denoise_ensemble needs at least one denoiser")
    img = _as_image(x)
    return [img.copy()] + [spec.apply(img) for spec in specs]
