"""ADMM solver for the weighted subspace/RCTV mixed-noise model.

The model restores ``X = U V^T`` from ``Y`` by solving::

    min  sum_i tau_i ||grad_i(U)||_1 + alpha/2 ||1 - W||_F^2
         + beta ||S||_1 + gamma ||D||_{2,1}
    s.t. W * (Y - U V^T) = S + D,  V^T V = I,  W in [0, 1]

with splitting variables ``H_i = grad_i(U)`` and multipliers ``L1, L2``
(gradient constraints) and ``L3`` (fidelity constraint). One iteration runs
the block updates H, U, V, S, D, W, then the multiplier and penalty update,
in that fixed order.

All matrices are the ``MN x k`` unfoldings used throughout the package.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable

import numpy as np

from .core import HsiCube, UnfoldedMatrix, fold3, safe_divide, unfold3
from .errors import DimensionMismatch, EmptyInput, InvalidParams, NonFiniteState, RankOutOfRange
from .linops import (
    fft_diag_solve_array,
    forward_diff,
    forward_diff_adjoint,
    procrustes_orthogonal,
    shrink_l21_columns,
    soft_threshold,
    truncated_svd,
)
from .metrics import psnr_bands


class Variant(str, Enum):
    FULL = "full"
    BASELINE_A = "baseline_a"
    BASELINE = "baseline"


class Status(str, Enum):
    CONTINUE = "continue"
    CONVERGED = "converged"


U_SOLVES = ("unweighted", "tau_weighted")
L21_THRESHOLDS = ("scaled", "bare")
L21_GROUPS = ("columns", "bands")

DEFAULT_RHO_CAP_FACTOR = 1e6


@dataclass(frozen=True)
class SolverParams:
    """Tunables of the ADMM iteration.

    ``rho0="auto"`` uses ``1 / sigma_max(unfold3(Y))``; ``rho_max=None`` caps
    the penalty at ``1e6 * rho0``.

    ``u_solve`` selects the normal operator of the U step: ``"unweighted"`` is
    ``rho (I + sum_i grad_i^T grad_i)``, consistent with the H update's
    ``tau/rho`` threshold; ``"tau_weighted"`` weights each gradient term by
    ``tau_i``. ``l21_threshold`` picks ``gamma/rho`` (``"scaled"``) or bare
    ``gamma``. ``l21_groups`` groups D by spatial column within each band
    (``"columns"``, length-M fibers) or by whole band (``"bands"``).

    With ``gamma == 0`` an unpenalised D would swallow the whole fidelity
    residual, so by default (``zero_gamma_disables_d``) D is then held at 0.
    """

    r: int
    tau: tuple[float, float] = (1.0, 1.0)
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 0.0
    rho0: float | str = "auto"
    eta: float = 2.0
    rho_max: float | None = None
    eps: float = 1e-5
    max_iter: int = 100
    w_floor: float = 1e-3
    variant: Variant = Variant.FULL
    u_solve: str = "unweighted"
    l21_threshold: str = "scaled"
    l21_groups: str = "columns"
    zero_gamma_disables_d: bool = True

    def __post_init__(self):
        tau = self.tau
        if np.isscalar(tau):
            tau = (float(tau), float(tau))
        tau = tuple(float(t) for t in tau)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "variant", Variant(self.variant))
        if isinstance(self.rho0, str) and self.rho0 != "auto":
            raise InvalidParams(f"rho0 must be a positive number or 'auto', got {self.rho0!r}")
        self.validate()

    def validate(self) -> None:
        problems = []
        if int(self.r) != self.r or self.r < 1:
            problems.append(f"r must be a positive integer, got {self.r}")
        if len(self.tau) != 2 or min(self.tau) < 0:
            problems.append(f"tau must be a nonnegative pair, got {self.tau}")
        if not self.alpha > 0:
            problems.append(f"alpha must be positive, got {self.alpha}")
        if not self.beta >= 0:
            problems.append(f"beta must be nonnegative, got {self.beta}")
        if not self.gamma >= 0:
            problems.append(f"gamma must be nonnegative, got {self.gamma}")
        if not isinstance(self.rho0, str) and not self.rho0 > 0:
            problems.append(f"rho0 must be positive, got {self.rho0}")
        if not self.eta >= 1:
            problems.append(f"eta must be >= 1, got {self.eta}")
        if self.rho_max is not None:
            if not self.rho_max > 0:
                problems.append(f"rho_max must be positive, got {self.rho_max}")
            elif not isinstance(self.rho0, str) and self.rho_max < self.rho0:
                problems.append(f"rho_max {self.rho_max} is below rho0 {self.rho0}")
        if not self.eps > 0:
            problems.append(f"eps must be positive, got {self.eps}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            problems.append(f"max_iter must be a positive integer, got {self.max_iter}")
        if not self.w_floor > 0:
            problems.append(f"w_floor must be positive, got {self.w_floor}")
        if self.u_solve not in U_SOLVES:
            problems.append(f"u_solve must be one of {U_SOLVES}, got {self.u_solve!r}")
        if self.l21_threshold not in L21_THRESHOLDS:
            problems.append(f"l21_threshold must be one of {L21_THRESHOLDS}")
        if self.l21_groups not in L21_GROUPS:
            problems.append(f"l21_groups must be one of {L21_GROUPS}")
        if problems:
            raise InvalidParams("; ".join(problems))

    def check_shape(self, mn: int, b: int) -> None:
        if not self.r <= min(mn, b):
            raise RankOutOfRange(f"rank {self.r} exceeds min(MN, B) = {min(mn, b)}")

    def to_dict(self) -> dict:
        return {
            "r": int(self.r),
            "tau": list(self.tau),
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "rho0": self.rho0,
            "eta": self.eta,
            "rho_max": self.rho_max,
            "eps": self.eps,
            "max_iter": int(self.max_iter),
            "w_floor": self.w_floor,
            "variant": self.variant.value,
            "u_solve": self.u_solve,
            "l21_threshold": self.l21_threshold,
            "l21_groups": self.l21_groups,
            "zero_gamma_disables_d": self.zero_gamma_disables_d,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SolverParams":
        d = dict(d)
        if "tau" in d and isinstance(d["tau"], list):
            d["tau"] = tuple(d["tau"])
        return cls(**d)


@dataclass
class SolverState:
    U: np.ndarray
    V: np.ndarray
    W: np.ndarray
    S: np.ndarray
    D: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    L1: np.ndarray
    L2: np.ndarray
    L3: np.ndarray
    rho: float
    rho_max: float
    dims: tuple[int, int]
    iter: int = 0

    ARRAYS = ("U", "V", "W", "S", "D", "H1", "H2", "L1", "L2", "L3")

    def copy(self) -> "SolverState":
        return replace(self, **{k: getattr(self, k).copy() for k in self.ARRAYS})

    @property
    def low_rank(self) -> np.ndarray:
        return self.U @ self.V.T


@dataclass(frozen=True)
class IterationRecord:
    iter: int
    res_grad1: float
    res_grad2: float
    res_fidelity: float
    rho: float
    psnr: float | None = None


TRACE_COLUMNS = ("iter", "res_grad1", "res_grad2", "res_fidelity", "rho", "psnr")


def _fmt(v: float | None) -> str:
    if v is None:
        return ""
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.10g}"


@dataclass
class IterationTrace:
    records: list[IterationRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def append(self, rec: IterationRecord) -> None:
        self.records.append(rec)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(TRACE_COLUMNS) + "\n")
        for r in self.records:
            row = [str(r.iter)] + [_fmt(getattr(r, c)) for c in TRACE_COLUMNS[1:]]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "IterationTrace":
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
            raise ValueError(f"unexpected trace header {reader.fieldnames}")
        recs = []
        for row in reader:
            recs.append(
                IterationRecord(
                    int(row["iter"]),
                    float(row["res_grad1"]),
                    float(row["res_grad2"]),
                    float(row["res_fidelity"]),
                    float(row["rho"]),
                    float(row["psnr"]) if row["psnr"] else None,
                )
            )
        return cls(recs)


@dataclass
class SolveResult:
    x_hat: HsiCube
    s_hat: HsiCube
    d_hat: HsiCube
    w_hat: HsiCube
    trace: IterationTrace
    state: SolverState
    converged: bool
    seconds: float

    @property
    def iterations(self) -> int:
        return len(self.trace)


def _as_array(y) -> np.ndarray:
    if isinstance(y, UnfoldedMatrix):
        return y.data
    return np.asarray(y, dtype=np.float64)


def resolve_rho(y, params: SolverParams) -> tuple[float, float]:
    """Initial penalty and cap for ``y`` (``auto`` is ``1/sigma_max``)."""
    y = _as_array(y)
    if params.rho0 == "auto":
        smax = np.linalg.norm(y, 2)
        if not smax > 0:
            raise EmptyInput("rho0='auto' needs a nonzero input")
        rho0 = 1.0 / smax
    else:
        rho0 = float(params.rho0)
    rho_max = params.rho_max if params.rho_max is not None else DEFAULT_RHO_CAP_FACTOR * rho0
    if rho_max < rho0:
        raise InvalidParams(f"rho_max {rho_max} is below rho0 {rho0}")
    return rho0, float(rho_max)


def initialize(y: UnfoldedMatrix, params: SolverParams) -> SolverState:
    if y.data.size == 0:
        raise EmptyInput("empty input")
    data = y.data
    mn, b = data.shape
    params.check_shape(mn, b)
    dims = y.spatial_dims
    U, V, _ = truncated_svd(data, params.r)
    rho0, rho_max = resolve_rho(data, params)
    zeros_b = np.zeros((mn, b))
    return SolverState(
        U=U,
        V=V,
        W=np.ones((mn, b)),
        S=zeros_b,
        D=zeros_b.copy(),
        H1=forward_diff(U, dims, 1),
        H2=forward_diff(U, dims, 2),
        L1=np.zeros_like(U),
        L2=np.zeros_like(U),
        L3=zeros_b.copy(),
        rho=rho0,
        rho_max=rho_max,
        dims=dims,
    )


def _grads(state: SolverState) -> tuple[np.ndarray, np.ndarray]:
    return forward_diff(state.U, state.dims, 1), forward_diff(state.U, state.dims, 2)


def _corrected_data(state: SolverState, params: SolverParams, y: np.ndarray) -> np.ndarray:
    """``Y - (S + D) / W + L3 / rho`` shared by the U and V steps."""
    return y - safe_divide(state.S + state.D, state.W, params.w_floor) + state.L3 / state.rho


def update_H(state: SolverState, params: SolverParams) -> SolverState:
    g1, g2 = _grads(state)
    rho = state.rho
    H1 = soft_threshold(g1 + state.L1 / rho, params.tau[0] / rho)
    H2 = soft_threshold(g2 + state.L2 / rho, params.tau[1] / rho)
    return replace(state, H1=H1, H2=H2)


def update_U(state: SolverState, params: SolverParams, y) -> SolverState:
    y = _as_array(y)
    rho, dims = state.rho, state.dims
    if params.u_solve == "tau_weighted":
        weights = params.tau
    else:
        weights = (1.0, 1.0)
    rhs = rho * (_corrected_data(state, params, y) @ state.V)
    rhs += weights[0] * forward_diff_adjoint(rho * state.H1 - state.L1, dims, 1)
    rhs += weights[1] * forward_diff_adjoint(rho * state.H2 - state.L2, dims, 2)
    U = fft_diag_solve_array(rhs, dims, rho, weights)
    return replace(state, U=U)


def update_V(state: SolverState, params: SolverParams, y) -> SolverState:
    y = _as_array(y)
    G = _corrected_data(state, params, y)
    V = procrustes_orthogonal(G.T @ state.U)
    return replace(state, V=V)


def update_S(state: SolverState, params: SolverParams, y) -> SolverState:
    y = _as_array(y)
    arg = state.W * (y - state.low_rank) - state.D + state.L3 / state.rho
    return replace(state, S=soft_threshold(arg, params.beta / state.rho))


def group_shrink(omega: np.ndarray, t: float, dims: tuple[int, int], groups: str) -> np.ndarray:
    """l2,1 prox of an ``MN x B`` matrix under the chosen grouping."""
    if groups == "bands":
        return shrink_l21_columns(omega, t)
    m, n = dims
    b = omega.shape[1]
    # (M, N, B) -> M x (N*B): one column per (spatial column, band) fiber
    fibers = omega.reshape(m, n * b)
    return shrink_l21_columns(fibers, t).reshape(omega.shape)


def group_norm(d: np.ndarray, dims: tuple[int, int], groups: str) -> float:
    if groups == "bands":
        return float(np.linalg.norm(d, axis=0).sum())
    m, n = dims
    return float(np.linalg.norm(d.reshape(m, -1), axis=0).sum())


def _l21_threshold(state: SolverState, params: SolverParams) -> float:
    if params.l21_threshold == "bare":
        return params.gamma
    return params.gamma / state.rho


def d_active(params: SolverParams) -> bool:
    if params.variant is Variant.BASELINE:
        return False
    return not (params.gamma == 0 and params.zero_gamma_disables_d)


def update_D(state: SolverState, params: SolverParams, y) -> SolverState:
    if not d_active(params):
        return state
    y = _as_array(y)
    omega = state.W * (y - state.low_rank) - state.S + state.L3 / state.rho
    D = group_shrink(omega, _l21_threshold(state, params), state.dims, params.l21_groups)
    return replace(state, D=D)


def update_W(state: SolverState, params: SolverParams, y) -> SolverState:
    if params.variant is not Variant.FULL:
        return state
    y = _as_array(y)
    rho, alpha = state.rho, params.alpha
    resid = y - state.low_rank
    num = alpha + rho * (state.S + state.D - state.L3 / rho) * resid
    den = alpha + rho * resid * resid
    return replace(state, W=np.clip(num / den, 0.0, 1.0))


def update_multipliers(state: SolverState, params: SolverParams, y) -> SolverState:
    y = _as_array(y)
    g1, g2 = _grads(state)
    rho = state.rho
    fid = state.W * (y - state.low_rank) - state.S - state.D
    return replace(
        state,
        L1=state.L1 + rho * (g1 - state.H1),
        L2=state.L2 + rho * (g2 - state.H2),
        L3=state.L3 + rho * fid,
        rho=min(params.eta * rho, state.rho_max),
    )


def residuals(state: SolverState, y) -> tuple[float, float, float]:
    """Squared constraint residuals relative to ``||Y||_F^2``."""
    y = _as_array(y)
    ny = float(np.sum(y * y))
    if ny == 0:
        ny = 1.0
    g1, g2 = _grads(state)
    fid = state.W * (y - state.low_rank) - state.S - state.D
    return (
        float(np.sum((g1 - state.H1) ** 2)) / ny,
        float(np.sum((g2 - state.H2) ** 2)) / ny,
        float(np.sum(fid * fid)) / ny,
    )


def check_convergence(state: SolverState, params: SolverParams, y) -> Status:
    r1, r2, rf = residuals(state, y)
    if r1 <= params.eps and r2 <= params.eps and rf <= params.eps:
        return Status.CONVERGED
    return Status.CONTINUE


def augmented_lagrangian(state: SolverState, params: SolverParams, y) -> float:
    """Augmented Lagrangian whose exact block minimisers the updates compute
    (for the default ``u_solve``/``l21_threshold``; U and V are exact when W is all ones)."""
    y = _as_array(y)
    rho = state.rho
    g1, g2 = _grads(state)
    val = params.tau[0] * np.abs(state.H1).sum() + params.tau[1] * np.abs(state.H2).sum()
    val += params.beta * np.abs(state.S).sum()
    val += params.gamma * group_norm(state.D, state.dims, params.l21_groups)
    val += 0.5 * params.alpha * np.sum((1.0 - state.W) ** 2)
    val += 0.5 * rho * np.sum((g1 - state.H1 + state.L1 / rho) ** 2)
    val += 0.5 * rho * np.sum((g2 - state.H2 + state.L2 / rho) ** 2)
    fid = state.W * (y - state.low_rank) - state.S - state.D + state.L3 / rho
    val += 0.5 * rho * np.sum(fid * fid)
    return float(val)


def surrogate_lagrangian(state: SolverState, params: SolverParams, y) -> float:
    """The (U, V)-dependent part of the objective the U and V steps minimise.

    The fidelity term is taken with the weight divided out,
    ``||Y - (S+D)/W + L3/rho - U V^T||_F^2``, which is what makes the U step
    FFT-diagonalisable; it coincides with the augmented Lagrangian when W is
    all ones.
    """
    y = _as_array(y)
    rho = state.rho
    g1, g2 = _grads(state)
    w = params.tau if params.u_solve == "tau_weighted" else (1.0, 1.0)
    val = 0.5 * rho * w[0] * np.sum((g1 - state.H1 + state.L1 / rho) ** 2)
    val += 0.5 * rho * w[1] * np.sum((g2 - state.H2 + state.L2 / rho) ** 2)
    val += 0.5 * rho * np.sum((_corrected_data(state, params, y) - state.low_rank) ** 2)
    return float(val)


BLOCK_UPDATES = (
    ("H", lambda s, p, y: update_H(s, p)),
    ("U", update_U),
    ("V", update_V),
    ("S", update_S),
    ("D", update_D),
    ("W", update_W),
)


def _check_finite(state: SolverState) -> None:
    for name in state.ARRAYS:
        if not np.isfinite(getattr(state, name)).all():
            raise NonFiniteState(state.iter, name)
    if not math.isfinite(state.rho):
        raise NonFiniteState(state.iter, "rho")


def iterate(state: SolverState, params: SolverParams, y) -> SolverState:
    """One full ADMM iteration (block updates then multipliers)."""
    for _, step in BLOCK_UPDATES:
        state = step(state, params, y)
    state = update_multipliers(state, params, y)
    return replace(state, iter=state.iter + 1)


def solve(
    y: HsiCube,
    params: SolverParams,
    truth: HsiCube | None = None,
    callback: Callable[[SolverState], None] | None = None,
    stop_on_convergence: bool = True,
) -> SolveResult:
    """Run the ADMM iteration until the residual test passes or ``max_iter``.

    ``truth`` adds a per-iteration PSNR column to the trace. ``callback`` is
    called with the state after every iteration. With
    ``stop_on_convergence=False`` all ``max_iter`` iterations are run.
    """
    yu = unfold3(y)
    yd = yu.data
    m, n, b = y.shape
    if truth is not None and truth.shape != y.shape:
        raise DimensionMismatch(f"truth shape {truth.shape} != input shape {y.shape}")
    truth_u = unfold3(truth).data if truth is not None else None
    t0 = time.perf_counter()
    state = initialize(yu, params)
    trace = IterationTrace()
    converged = False
    for _ in range(int(params.max_iter)):
        state = iterate(state, params, yd)
        _check_finite(state)
        r1, r2, rf = residuals(state, yd)
        p = psnr_bands(truth_u, state.low_rank) if truth_u is not None else None
        trace.append(IterationRecord(state.iter, r1, r2, rf, state.rho, p))
        if callback is not None:
            callback(state)
        if r1 <= params.eps and r2 <= params.eps and rf <= params.eps:
            converged = True
            if stop_on_convergence:
                break
    seconds = time.perf_counter() - t0
    dims = (m, n)
    return SolveResult(
        x_hat=fold3(state.low_rank, dims),
        s_hat=fold3(state.S, dims),
        d_hat=fold3(state.D, dims),
        w_hat=fold3(state.W, dims),
        trace=trace,
        state=state,
        converged=converged,
        seconds=seconds,
    )
