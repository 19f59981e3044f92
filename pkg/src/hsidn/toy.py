"""Toy ADMM solvers used to certify that the Gaussian-noise variable can be
eliminated from the updates by rescaling the other weights.

Both toys use a squared Frobenius regulariser on the image, so every block
has a closed form:

* four-variable model: ``tau ||X||^2 + lam ||G||^2 + beta ||S||_1 + gamma ||D||_21``
  subject to ``Y = X + G + S + D``;
* three-variable model: the same without ``G``, with every weight multiplied
  by ``1 + rho / (2 lam)``.

In the four-variable solver each block is minimised jointly with ``G``
(``G`` has a closed-form minimiser given the rest), then ``G`` is set to its
minimiser and the multiplier is updated. The ``D`` groups are the columns of
the mode-3 unfolding.

The multipliers of the two models drift apart by a factor
``2 lam / (2 lam + rho)`` per step, so the free-running trajectories only
coincide on the first iteration. The certificate therefore runs in lock step:
every iteration both solvers start from the four-variable pre-state and
their X, S, D updates are compared.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import HsiCube, unfold3
from .errors import NonpositiveParameter
from .linops import shrink_l21_columns, soft_threshold


@dataclass(frozen=True)
class ToyState:
    X: np.ndarray
    S: np.ndarray
    D: np.ndarray
    G: np.ndarray
    L: np.ndarray


def _zeros(y: np.ndarray) -> ToyState:
    z = np.zeros_like(y)
    return ToyState(z, z.copy(), z.copy(), z.copy(), z.copy())


def scale_factor(lam: float, rho: float) -> float:
    """Weight multiplier ``1 + rho / (2 lam)`` mapping the four-variable model onto the three-variable one."""
    return 1.0 + rho / (2.0 * lam)


def four_variable_step(st: ToyState, y, tau, lam, beta, gamma, rho) -> ToyState:
    """One ADMM sweep on the model with an explicit Gaussian variable."""
    # joint (block, G) minimisation: G = rho (a - block) / (2 lam + rho) leaves
    # the block seeing the quadratic (lam rho / (2 lam + rho)) ||a - block||^2
    k = 2.0 * lam * rho / (2.0 * lam + rho)
    lr = st.L / rho
    X = k * (y - st.S - st.D + lr) / (2.0 * tau + k)
    S = soft_threshold(y - X - st.D + lr, beta / k)
    D = shrink_l21_columns(y - X - S + lr, gamma / k)
    G = rho * (y - X - S - D + lr) / (2.0 * lam + rho)
    L = st.L + rho * (y - X - G - S - D)
    return ToyState(X, S, D, G, L)


def three_variable_step(st: ToyState, y, tau, beta, gamma, rho) -> ToyState:
    """One ADMM sweep on the reduced model (no Gaussian variable)."""
    lr = st.L / rho
    X = rho * (y - st.S - st.D + lr) / (2.0 * tau + rho)
    S = soft_threshold(y - X - st.D + lr, beta / rho)
    D = shrink_l21_columns(y - X - S + lr, gamma / rho)
    L = st.L + rho * (y - X - S - D)
    return replace(st, X=X, S=S, D=D, L=L)


def _gap(a: ToyState, b: ToyState) -> float:
    return float(
        np.abs(a.X - b.X).max() + np.abs(a.S - b.S).max() + np.abs(a.D - b.D).max()
    )


def _check(tau, lam, beta, gamma, rho, iters) -> None:
    for name, v in (("tau", tau), ("lambda", lam), ("beta", beta), ("gamma", gamma), ("rho", rho)):
        if not v > 0:
            raise NonpositiveParameter(f"{name} must be positive, got {v}")
    if iters < 1:
        raise NonpositiveParameter(f"iters must be at least 1, got {iters}")


def toy_equivalence_check(
    y,
    tau: float,
    lam: float,
    beta: float,
    gamma: float,
    rho: float,
    iters: int,
    lock_step: bool = True,
) -> float:
    """Largest ``|dX|_inf + |dS|_inf + |dD|_inf`` between the two toy solvers.

    ``rho`` is held fixed. With ``lock_step`` (default) the reduced solver is
    restarted from the four-variable state every iteration; otherwise both
    run freely from the same zero start.
    """
    _check(tau, lam, beta, gamma, rho, iters)
    cube = y if isinstance(y, HsiCube) else HsiCube(y)
    data = unfold3(cube).data
    c = scale_factor(lam, rho)
    full = _zeros(data)
    reduced = _zeros(data)
    worst = 0.0
    for _ in range(iters):
        start = full if lock_step else reduced
        nxt_reduced = three_variable_step(start, data, c * tau, c * beta, c * gamma, rho)
        full = four_variable_step(full, data, tau, lam, beta, gamma, rho)
        reduced = nxt_reduced
        worst = max(worst, _gap(full, reduced))
    return worst
