"""Image quality metrics: MSE, PSNR, normalized PSNR, SSIM, line profiles,
and Pearson correlation, with per-sample and aggregate reporting.

All computation is float64. PSNR is capped at 50 dB so identical images
map to a finite self-reference, and the normalized PSNR is the capped
value divided by the cap (unit interval, self-reference at 1.0).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.ndimage import correlate1d

PSNR_CAP_DB = 50.0


@dataclass(frozen=True)
class SsimParams:
    """Gaussian-window SSIM constants; ``dynamic_range`` is MAX of the format."""

    window_size: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 255.0

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2


def _as_2d_f64(img) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {arr.shape}")
    return arr


def mse(reference, test) -> float:
    """Mean squared pixel difference."""
    a = _as_2d_f64(reference)
    b = _as_2d_f64(test)
    if a.shape != b.shape:
        raise ValueError(f"mse: dimension mismatch {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def psnr(reference, test, max_value: float) -> float:
    """Peak signal-to-noise ratio in dB, capped at PSNR_CAP_DB."""
    if max_value <= 0:
        raise ValueError("psnr: max_value must be > 0")
    err = mse(reference, test)
    if err == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(max_value ** 2 / err), PSNR_CAP_DB)


def normalized_psnr(psnr_db: float) -> float:
    """PSNR mapped to [0, 1]: clamp to [0, cap] and divide by the cap."""
    return min(max(psnr_db, 0.0), PSNR_CAP_DB) / PSNR_CAP_DB


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    half = size // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return k / k.sum()


def ssim(reference, test, params: SsimParams = SsimParams()) -> float:
    """Mean of the local Gaussian-windowed SSIM map (valid windows only)."""
    a = _as_2d_f64(reference)
    b = _as_2d_f64(test)
    if a.shape != b.shape:
        raise ValueError(f"ssim: dimension mismatch {a.shape} vs {b.shape}")
    if min(a.shape) < params.window_size:
        raise ValueError(
            f"ssim: image {a.shape} smaller than window {params.window_size}")
    kernel = _gaussian_kernel(params.window_size, params.sigma)
    half = params.window_size // 2

    def smooth(img: np.ndarray) -> np.ndarray:
        out = correlate1d(img, kernel, axis=0, mode="nearest")
        out = correlate1d(out, kernel, axis=1, mode="nearest")
        return out[half:-half, half:-half]

    mu_a = smooth(a)
    mu_b = smooth(b)
    mu_aa = smooth(a * a)
    mu_bb = smooth(b * b)
    mu_ab = smooth(a * b)
    var_a = mu_aa - mu_a ** 2
    var_b = mu_bb - mu_b ** 2
    cov = mu_ab - mu_a * mu_b
    c1, c2 = params.c1, params.c2
    ssim_map = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / \
        ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
    return float(ssim_map.mean())


def line_profile(img, p0: Sequence[float], p1: Sequence[float], samples: int) -> np.ndarray:
    """Bilinear intensity samples at equally spaced points from p0 to p1.

    Points are (x, y) with x along columns and y along rows.
    """
    arr = _as_2d_f64(img)
    if samples < 2:
        raise ValueError("line_profile: need at least 2 samples")
    h, w = arr.shape
    for (x, y) in (p0, p1):
        if not (0 <= x <= w - 1 and 0 <= y <= h - 1):
            raise ValueError(f"line_profile: endpoint ({x}, {y}) outside image {arr.shape}")
    t = np.linspace(0.0, 1.0, samples)
    xs = p0[0] + t * (p1[0] - p0[0])
    ys = p0[1] + t * (p1[1] - p0[1])
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 2)
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 2)
    fx = xs - x0
    fy = ys - y0
    return (arr[y0, x0] * (1 - fx) * (1 - fy)
            + arr[y0, x0 + 1] * fx * (1 - fy)
            + arr[y0 + 1, x0] * (1 - fx) * fy
            + arr[y0 + 1, x0 + 1] * fx * fy)


def pearson(a: Sequence[float], b: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient."""
    x = np.asarray(a, dtype=np.float64).ravel()
    y = np.asarray(b, dtype=np.float64).ravel()
    if x.size != y.size or x.size < 2:
        raise ValueError("pearson: sequences must have equal length >= 2")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float(xc @ xc) * float(yc @ yc))
    if denom == 0.0:
        raise ValueError("pearson: correlation undefined for constant input")
    return float(np.clip((xc @ yc) / denom, -1.0, 1.0))


def count_profile_peaks(profile: Sequence[float], min_prominence_frac: float = 0.1) -> int:
    """Number of local maxima with prominence above a fraction of the range."""
    from scipy.signal import find_peaks
    arr = np.asarray(profile, dtype=np.float64)
    span = arr.max() - arr.min()
    if span == 0:
        return 0
    peaks, _ = find_peaks(arr, prominence=min_prominence_frac * span)
    return int(len(peaks))


@dataclass
class SampleMetrics:
    id: str
    psnr_db: float
    npsnr: float
    ssim: float
    baseline_psnr_db: Optional[float] = None
    baseline_npsnr: Optional[float] = None
    baseline_ssim: Optional[float] = None


@dataclass
class MetricReport:
    """Per-sample metrics plus their aggregate means and standard deviations."""

    samples: List[SampleMetrics] = field(default_factory=list)
    aggregate: Dict[str, float] = field(default_factory=dict)

    def compute_aggregate(self) -> None:
        agg = {}
        for key in ("psnr_db", "npsnr", "ssim", "baseline_psnr_db",
                    "baseline_npsnr", "baseline_ssim"):
            values = [getattr(s, key) for s in self.samples if getattr(s, key) is not None]
            if values:
                agg[f"mean_{key}"] = float(np.mean(values))
                agg[f"std_{key}"] = float(np.std(values))
        self.aggregate = agg

    def to_json(self) -> str:
        return json.dumps({"samples": [vars(s) for s in self.samples],
                           "aggregate": self.aggregate}, indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        fields = ["id", "psnr_db", "npsnr", "ssim",
                  "baseline_psnr_db", "baseline_npsnr", "baseline_ssim"]
        writer = csv.DictWriter(buf, fieldnames=fields)
        writer.writeheader()
        for s in self.samples:
            writer.writerow({k: vars(s)[k] for k in fields})
        return buf.getvalue()


def evaluate_pairset(generated: Dict[str, np.ndarray], targets: Dict[str, np.ndarray],
                     baselines: Optional[Dict[str, np.ndarray]] = None,
                     params: SsimParams = SsimParams()) -> MetricReport:
    """PSNR/nPSNR/SSIM of generated (and optional baseline) images vs targets."""
    if set(generated) != set(targets):
        raise ValueError(
            f"evaluate_pairset: id mismatch, only in generated: "
            f"{sorted(set(generated) - set(targets))}, only in targets: "
            f"{sorted(set(targets) - set(generated))}")
    report = MetricReport()
    for sid in sorted(generated):
        p = psnr(targets[sid], generated[sid], params.dynamic_range)
        entry = SampleMetrics(id=sid, psnr_db=p, npsnr=normalized_psnr(p),
                              ssim=ssim(targets[sid], generated[sid], params))
        if baselines is not None:
            if sid not in baselines:
                raise ValueError(f"evaluate_pairset: baseline missing id {sid!r}")
            bp = psnr(targets[sid], baselines[sid], params.dynamic_range)
            entry.baseline_psnr_db = bp
            entry.baseline_npsnr = normalized_psnr(bp)
            entry.baseline_ssim = ssim(targets[sid], baselines[sid], params)
        report.samples.append(entry)
    report.compute_aggregate()
    return report
