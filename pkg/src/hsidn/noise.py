"""Seeded mixed-noise contamination: Gaussian, salt-and-pepper, deadlines.

Random streams are derived from one master seed with
``SeedSequence(seed, spawn_key=(stage, band))``, one stream per stage and
band, so every band can be generated independently and the result never
depends on evaluation order. Stages:

==========  =====================================
stage id    stream
==========  =====================================
0           Gaussian samples, per band
1           impulse positions and values, per band
2           deadline columns, per band
3           choice of bands carrying deadlines
==========  =====================================

Composition order is fixed: Gaussian, then impulses, then deadlines.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import HsiCube
from .errors import FractionOutOfRange, NegativeVariance, UnknownCase, UnknownSweep

STAGE_GAUSSIAN = 0
STAGE_IMPULSE = 1
STAGE_DEADLINE = 2
STAGE_BAND_CHOICE = 3

DEFAULT_AFFECTED_BANDS = 1.0 / 3.0

# case -> (gaussian variance, impulse fraction, deadline fraction)
CASES = {
    1: (0.1, 0.15, 0.0),
    2: (0.1, 0.0, 0.2),
    3: (0.2, 0.1, 0.1),
    4: (0.1, 0.2, 0.2),
    5: (0.15, 0.15, 0.15),
}

SWEEP_LEVELS = tuple(round(0.05 * k, 10) for k in range(1, 11))

# guards floor/ceil against products such as 0.15 * 10000 = 1500.0000000000002
_COUNT_EPS = 1e-9


def _floor_count(fraction: float, total: int) -> int:
    return int(math.floor(fraction * total + _COUNT_EPS))


def _ceil_count(fraction: float, total: int) -> int:
    return int(math.ceil(fraction * total - _COUNT_EPS))


def _check_fraction(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise FractionOutOfRange(f"{name} must lie in [0, 1], got {value}")
    return value


def _check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def stream(seed: int, stage: int, index: int) -> np.random.Generator:
    """Independent generator for ``(stage, index)`` under master ``seed``."""
    ss = np.random.SeedSequence(_check_seed(seed), spawn_key=(stage, index))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class NoiseSpec:
    gaussian_variance: float = 0.0
    impulse_fraction: float = 0.0
    deadline_fraction: float = 0.0
    affected_band_fraction: float = DEFAULT_AFFECTED_BANDS
    seed: int = 0
    # additive stripe level; 0 means zeroed deadline columns
    stripe_offset: float = 0.0

    def __post_init__(self):
        if not self.gaussian_variance >= 0:
            raise NegativeVariance(f"variance must be nonnegative, got {self.gaussian_variance}")
        _check_fraction("impulse_fraction", self.impulse_fraction)
        _check_fraction("deadline_fraction", self.deadline_fraction)
        _check_fraction("affected_band_fraction", self.affected_band_fraction)
        _check_seed(self.seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["stripe_offset"] == 0.0:
            del d["stripe_offset"]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSpec":
        allowed = {
            "gaussian_variance",
            "impulse_fraction",
            "deadline_fraction",
            "affected_band_fraction",
            "seed",
            "stripe_offset",
        }
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown NoiseSpec keys: {sorted(unknown)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "NoiseSpec":
        return cls.from_dict(json.loads(text))


def add_gaussian(x: HsiCube, variance: float, seed: int) -> HsiCube:
    """Add i.i.d. N(0, variance) noise; output is not clipped."""
    if not variance >= 0:
        raise NegativeVariance(f"variance must be nonnegative, got {variance}")
    if variance == 0:
        return HsiCube(x.data)
    m, n, b = x.shape
    sd = math.sqrt(variance)
    out = np.array(x.data)
    for band in range(b):
        out[:, :, band] += sd * stream(seed, STAGE_GAUSSIAN, band).standard_normal((m, n))
    return HsiCube(out)


def add_salt_pepper(x: HsiCube, fraction: float, seed: int) -> HsiCube:
    """Set ``floor(fraction*M*N)`` random pixels per band to 0 or 1, equiprobably."""
    fraction = _check_fraction("impulse fraction", fraction)
    m, n, b = x.shape
    k = _floor_count(fraction, m * n)
    out = np.array(x.data)
    if k == 0:
        return HsiCube(out)
    for band in range(b):
        rng = stream(seed, STAGE_IMPULSE, band)
        idx = rng.choice(m * n, size=k, replace=False)
        vals = rng.integers(0, 2, size=k).astype(np.float64)
        plane = out[:, :, band].reshape(-1)
        plane[idx] = vals
        out[:, :, band] = plane.reshape(m, n)
    return HsiCube(out)


def deadline_layout(
    shape: tuple[int, int, int],
    deadline_fraction: float,
    affected_band_fraction: float,
    seed: int,
) -> dict[int, np.ndarray]:
    """Map of band -> sorted column indices that carry deadlines."""
    deadline_fraction = _check_fraction("deadline fraction", deadline_fraction)
    affected_band_fraction = _check_fraction("affected band fraction", affected_band_fraction)
    _, n, b = shape
    per_band = _floor_count(deadline_fraction, n)
    n_bands = _ceil_count(affected_band_fraction, b)
    if per_band == 0 or n_bands == 0:
        return {}
    bands = stream(seed, STAGE_BAND_CHOICE, 0).choice(b, size=n_bands, replace=False)
    layout = {}
    for band in sorted(int(v) for v in bands):
        cols = stream(seed, STAGE_DEADLINE, band).choice(n, size=per_band, replace=False)
        layout[band] = np.sort(cols)
    return layout


def add_deadlines(
    x: HsiCube,
    deadline_fraction: float,
    affected_band_fraction: float = DEFAULT_AFFECTED_BANDS,
    seed: int = 0,
    stripe_offset: float = 0.0,
) -> HsiCube:
    """Full-height column corruption in a random subset of bands.

    With ``stripe_offset == 0`` the chosen columns are set to 0 (deadlines);
    otherwise ``stripe_offset`` is added to them (stripes).
    """
    layout = deadline_layout(x.shape, deadline_fraction, affected_band_fraction, seed)
    out = np.array(x.data)
    for band, cols in layout.items():
        if stripe_offset == 0.0:
            out[:, cols, band] = 0.0
        else:
            out[:, cols, band] += stripe_offset
    return HsiCube(out)


def apply_noise(x: HsiCube, spec: NoiseSpec) -> HsiCube:
    y = add_gaussian(x, spec.gaussian_variance, spec.seed)
    y = add_salt_pepper(y, spec.impulse_fraction, spec.seed)
    return add_deadlines(
        y, spec.deadline_fraction, spec.affected_band_fraction, spec.seed, spec.stripe_offset
    )


def case_spec(
    case: int,
    seed: int,
    affected_band_fraction: float = DEFAULT_AFFECTED_BANDS,
    sigma_is_std: bool = False,
) -> NoiseSpec:
    """Resolve one of the five benchmark noise cases.

    The case table lists the Gaussian level as a variance; ``sigma_is_std``
    reads that number as a standard deviation instead.
    """
    if case not in CASES:
        raise UnknownCase(f"unknown noise case {case!r}; expected one of {sorted(CASES)}")
    level, impulse, deadline = CASES[case]
    variance = level * level if sigma_is_std else level
    return NoiseSpec(variance, impulse, deadline, affected_band_fraction, seed)


def apply_case(
    x: HsiCube,
    case: int,
    seed: int,
    affected_band_fraction: float = DEFAULT_AFFECTED_BANDS,
    sigma_is_std: bool = False,
) -> tuple[HsiCube, NoiseSpec]:
    spec = case_spec(case, seed, affected_band_fraction, sigma_is_std)
    return apply_noise(x, spec), spec


def sweep_specs(
    sweep: str,
    seed: int,
    affected_band_fraction: float = DEFAULT_AFFECTED_BANDS,
    stripe_offset: float = 0.0,
) -> list[NoiseSpec]:
    if sweep == "impulse":
        return [
            NoiseSpec(0.0, p, 0.0, affected_band_fraction, seed, stripe_offset)
            for p in SWEEP_LEVELS
        ]
    if sweep == "gaussian":
        # the sweep is stated in standard deviations
        return [
            NoiseSpec(round(s * s, 12), 0.05, 0.05, affected_band_fraction, seed, stripe_offset)
            for s in SWEEP_LEVELS
        ]
    raise UnknownSweep(f"unknown sweep {sweep!r}; expected 'impulse' or 'gaussian'")


def gradient_sweep(
    x: HsiCube,
    sweep: str,
    seed: int,
    affected_band_fraction: float = DEFAULT_AFFECTED_BANDS,
    stripe_offset: float = 0.0,
) -> list[tuple[HsiCube, NoiseSpec]]:
    return [
        (apply_noise(x, spec), spec)
        for spec in sweep_specs(sweep, seed, affected_band_fraction, stripe_offset)
    ]
