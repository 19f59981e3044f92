"""Full-reference quality metrics: band-mean PSNR and SSIM, mean SAM.

PSNR aggregation: bands with zero error have infinite PSNR and are left out
of the mean; the count is reported as ``infinite_bands``. PSNR is ``inf``
only if every band is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .core import HsiCube
from .errors import DimensionMismatch

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SAM_NORM_FLOOR = 1e-12


def _pair(ref, test) -> tuple[np.ndarray, np.ndarray]:
    a = ref.data if isinstance(ref, HsiCube) else np.asarray(ref, dtype=np.float64)
    b = test.data if isinstance(test, HsiCube) else np.asarray(test, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def band_psnr(ref, test, peak: float = 1.0) -> np.ndarray:
    a, b = _pair(ref, test)
    bands = a.shape[-1]
    mse = np.mean((a - b).reshape(-1, bands) ** 2, axis=0)
    with np.errstate(divide="ignore"):
        return np.where(mse > 0, 10.0 * np.log10(peak * peak / np.where(mse > 0, mse, 1.0)), np.inf)


def _mean_finite(values: np.ndarray) -> float:
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return math.inf
    return float(finite.mean())


def psnr(ref, test, peak: float = 1.0) -> float:
    """Mean over bands of ``10 log10(peak^2 / MSE_band)``."""
    return _mean_finite(band_psnr(ref, test, peak))


def psnr_bands(ref_unfolded: np.ndarray, test_unfolded: np.ndarray, peak: float = 1.0) -> float:
    """:func:`psnr` on ``MN x B`` unfoldings."""
    return _mean_finite(band_psnr(ref_unfolded, test_unfolded, peak))


def _gaussian_window() -> np.ndarray:
    half = SSIM_WINDOW // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    w = np.exp(-(x * x) / (2 * SSIM_SIGMA**2))
    return w / w.sum()


def _blur(img: np.ndarray) -> np.ndarray:
    w = _gaussian_window()
    # scipy "reflect" is the symmetric (edge-repeating) extension
    out = correlate1d(img, w, axis=0, mode="reflect")
    return correlate1d(out, w, axis=1, mode="reflect")


def ssim_band(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    mu_a = _blur(a)
    mu_b = _blur(b)
    saa = _blur(a * a) - mu_a * mu_a
    sbb = _blur(b * b) - mu_b * mu_b
    sab = _blur(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (saa + sbb + c2)
    return float(np.mean(num / den))


def band_ssim(ref, test, peak: float = 1.0) -> np.ndarray:
    a, b = _pair(ref, test)
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise DimensionMismatch(
            f"SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {a.shape[:2]}"
        )
    out = []
    for k in range(a.shape[-1]):
        ak, bk = a[:, :, k], b[:, :, k]
        out.append(1.0 if np.array_equal(ak, bk) else ssim_band(ak, bk, peak))
    return np.array(out)


def ssim(ref, test, peak: float = 1.0) -> float:
    """Mean over bands of Gaussian-windowed SSIM (11x11, sigma 1.5)."""
    return float(np.mean(band_ssim(ref, test, peak)))


def sam_details(ref, test) -> tuple[float, int]:
    """Mean spectral angle in radians and the number of skipped (near-zero) pixels."""
    a, b = _pair(ref, test)
    bands = a.shape[-1]
    ra = a.reshape(-1, bands)
    rb = b.reshape(-1, bands)
    na = np.linalg.norm(ra, axis=1)
    nb = np.linalg.norm(rb, axis=1)
    valid = (na > SAM_NORM_FLOOR) & (nb > SAM_NORM_FLOOR)
    skipped = int((~valid).sum())
    if not valid.any():
        return 0.0, skipped
    ua = ra[valid] / na[valid, None]
    ub = rb[valid] / nb[valid, None]
    # half-angle form; arccos of the cosine loses ~1e-8 near parallel vectors
    angle = 2.0 * np.arctan2(np.linalg.norm(ua - ub, axis=1), np.linalg.norm(ua + ub, axis=1))
    return float(np.mean(angle)), skipped


def sam(ref, test) -> float:
    return sam_details(ref, test)[0]


def _json_float(v: float):
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return float(v)


def _from_json_float(v) -> float:
    return float(v)


@dataclass
class MetricsReport:
    psnr_db: float
    ssim: float
    sam_rad: float
    per_band: dict | None = None
    infinite_bands: int = 0
    sam_skipped_pixels: int = 0

    def to_dict(self) -> dict:
        d = {
            "psnr_db": _json_float(self.psnr_db),
            "ssim": float(self.ssim),
            "sam_rad": float(self.sam_rad),
            "per_band": None,
            "infinite_bands": self.infinite_bands,
            "sam_skipped_pixels": self.sam_skipped_pixels,
        }
        if self.per_band is not None:
            d["per_band"] = {
                "psnr_db": [_json_float(v) for v in self.per_band["psnr_db"]],
                "ssim": [float(v) for v in self.per_band["ssim"]],
            }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        per_band = d.get("per_band")
        if per_band is not None:
            per_band = {
                "psnr_db": [_from_json_float(v) for v in per_band["psnr_db"]],
                "ssim": [float(v) for v in per_band["ssim"]],
            }
        return cls(
            psnr_db=_from_json_float(d["psnr_db"]),
            ssim=float(d["ssim"]),
            sam_rad=float(d["sam_rad"]),
            per_band=per_band,
            infinite_bands=int(d.get("infinite_bands", 0)),
            sam_skipped_pixels=int(d.get("sam_skipped_pixels", 0)),
        )

    def summary(self) -> str:
        p = "inf" if math.isinf(self.psnr_db) else f"{self.psnr_db:.4f}"
        return f"PSNR/SSIM/SAM: {p} / {self.ssim:.4f} / {self.sam_rad:.4f}"


def evaluate(ref, test, peak: float = 1.0, per_band: bool = True) -> MetricsReport:
    bp = band_psnr(ref, test, peak)
    bs = band_ssim(ref, test, peak)
    angle, skipped = sam_details(ref, test)
    return MetricsReport(
        psnr_db=_mean_finite(bp),
        ssim=float(np.mean(bs)),
        sam_rad=angle,
        per_band={"psnr_db": bp.tolist(), "ssim": bs.tolist()} if per_band else None,
        infinite_bands=int(np.isinf(bp).sum()),
        sam_skipped_pixels=skipped,
    )
