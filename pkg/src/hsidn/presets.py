"""Named solver parameter profiles, ``<dataset>-case<k>``.

The ``cave``, ``pac`` and ``wdc`` profiles are the published per-dataset
settings; cases 3 to 5 share one row. The ``synthetic`` profiles were
grid-tuned on the built-in low-rank fixture (see
``benchmarks/tune_synthetic.py``).
"""

from __future__ import annotations

from .errors import UnknownPreset
from .solver import SolverParams

# dataset -> case -> (r, tau, beta, gamma)
_TABLE: dict[str, dict[int, tuple[int, float, float, float]]] = {
    "cave": {1: (4, 1.0, 1.0, 0.0), 2: (4, 3.0, 2.1, 1.0), 3: (3, 2.5, 1.5, 2.5)},
    "pac": {1: (3, 0.5, 0.95, 0.0), 2: (3, 0.001, 1.3, 0.7), 3: (3, 1.0, 1.5, 2.5)},
    "wdc": {1: (5, 0.47, 1.05, 0.0), 2: (4, 0.001, 1.3, 0.7), 3: (3, 0.1, 1.5, 2.5)},
    "synthetic": {1: (3, 2.5, 1.0, 0.0), 2: (3, 5.0, 1.5, 8.0), 3: (3, 5.0, 3.0, 12.0)},
}


def _row(dataset: str, case: int) -> tuple[int, float, float, float]:
    return _TABLE[dataset][min(case, 3)]


def preset_names() -> list[str]:
    return [f"{d}-case{k}" for d in _TABLE for k in range(1, 6)]


def resolve_preset(name: str, **overrides) -> SolverParams:
    """``SolverParams`` for a named profile; keyword overrides replace fields."""
    dataset, sep, case = name.strip().lower().partition("-case")
    if not sep or dataset not in _TABLE or not case.isdigit() or not 1 <= int(case) <= 5:
        raise UnknownPreset(f"unknown preset {name!r}; known: {', '.join(preset_names())}")
    r, tau, beta, gamma = _row(dataset, int(case))
    fields = {"r": r, "tau": tau, "beta": beta, "gamma": gamma}
    fields.update(overrides)
    return SolverParams(**fields)
