from dataclasses import replace

import numpy as np
import pytest
from oracles import dense_diff, random_orthonormal, scalar_soft

from hsidn import solver as slv
from hsidn.core import HsiCube, UnfoldedMatrix, unfold3
from hsidn.errors import InvalidParams, NonFiniteState, RankOutOfRange
from hsidn.linops import forward_diff, shrink_l21_columns
from hsidn.metrics import psnr
from hsidn.noise import apply_case
from hsidn.solver import (
    IterationTrace,
    SolverParams,
    Status,
    Variant,
    augmented_lagrangian,
    check_convergence,
    initialize,
    residuals,
    solve,
    update_D,
    update_H,
    update_multipliers,
    update_S,
    update_U,
    update_V,
    update_W,
)
from hsidn.synthetic import low_rank_cube


def random_state(rng, m=4, n=5, b=3, r=2, weights=True):
    y = rng.random((m * n, b))
    st = initialize(UnfoldedMatrix(y, (m, n)), SolverParams(r=r))
    st = replace(
        st,
        S=rng.standard_normal((m * n, b)) * 0.1,
        D=rng.standard_normal((m * n, b)) * 0.1,
        W=rng.uniform(0.2, 1.0, (m * n, b)) if weights else st.W,
        H1=rng.standard_normal((m * n, r)),
        H2=rng.standard_normal((m * n, r)),
        L1=rng.standard_normal((m * n, r)),
        L2=rng.standard_normal((m * n, r)),
        L3=rng.standard_normal((m * n, b)) * 0.1,
        rho=rng.uniform(0.5, 3.0),
    )
    return st, y


# -- parameters -------------------------------------------------------------------


def test_params_validation():
    assert SolverParams(r=2, tau=0.5).tau == (0.5, 0.5)
    for bad in ({"r": 0}, {"r": 2, "eta": 0.5}, {"r": 2, "eps": 0}, {"r": 2, "beta": -1},
                {"r": 2, "rho0": 2.0, "rho_max": 1.0}, {"r": 2, "u_solve": "x"}):
        with pytest.raises(InvalidParams):
            SolverParams(**bad)
    with pytest.raises(ValueError):
        SolverParams(r=2, variant="nope")


def test_params_round_trip():
    p = SolverParams(r=4, tau=(1.0, 2.0), beta=1.5, gamma=2.5, variant="baseline_a", rho0=0.3)
    assert SolverParams.from_dict(p.to_dict()) == p


def test_rank_checked_against_shape():
    with pytest.raises(RankOutOfRange):
        initialize(UnfoldedMatrix(np.ones((6, 2)), (2, 3)), SolverParams(r=3))


# -- initialisation -------------------------------------------------------------


def test_initialize(rng):
    y = rng.random((20, 4))
    st = initialize(UnfoldedMatrix(y, (4, 5)), SolverParams(r=2))
    assert st.rho == pytest.approx(1.0 / np.linalg.norm(y, 2))
    assert st.rho_max == pytest.approx(1e6 * st.rho)
    assert np.all(st.W == 1) and not st.S.any() and not st.D.any() and not st.L3.any()
    assert np.allclose(st.H1, forward_diff(st.U, (4, 5), 1))
    assert np.allclose(st.V.T @ st.V, np.eye(2))


def test_initialize_auto_rho_definition():
    y = np.zeros((4, 2))
    y[0, 0] = 4.0
    st = initialize(UnfoldedMatrix(y, (2, 2)), SolverParams(r=1))
    assert st.rho == 0.25


def test_initialize_exact_low_rank(rng):
    y = rng.random((30, 2)) @ rng.random((2, 5))
    st = initialize(UnfoldedMatrix(y, (5, 6)), SolverParams(r=2))
    assert np.allclose(st.low_rank, y, atol=1e-8)


# -- block updates ----------------------------------------------------------------


def test_update_H_matches_scalar_prox(rng):
    st, _ = random_state(rng)
    p = SolverParams(r=2, tau=(0.7, 0.2))
    new = update_H(st, p)
    arg = forward_diff(st.U, st.dims, 1) + st.L1 / st.rho
    expect = np.vectorize(scalar_soft)(arg, 0.7 / st.rho)
    assert np.allclose(new.H1, expect, atol=1e-6)
    zero = update_H(st, SolverParams(r=2, tau=0.0))
    assert np.array_equal(zero.H2, forward_diff(st.U, st.dims, 2) + st.L2 / st.rho)


@pytest.mark.parametrize("u_solve", ["unweighted", "tau_weighted"])
def test_update_U_matches_dense_normal_equations(rng, u_solve):
    st, y = random_state(rng, m=4, n=4, b=2, r=2)
    p = SolverParams(r=2, tau=(0.4, 1.7), u_solve=u_solve)
    w = p.tau if u_solve == "tau_weighted" else (1.0, 1.0)
    d1, d2 = dense_diff(4, 4, 1), dense_diff(4, 4, 2)
    rho = st.rho
    g = y - (st.S + st.D) / np.maximum(st.W, p.w_floor) + st.L3 / rho
    rhs = rho * g @ st.V + w[0] * d1.T @ (rho * st.H1 - st.L1) + w[1] * d2.T @ (rho * st.H2 - st.L2)
    a = rho * (np.eye(16) + w[0] * d1.T @ d1 + w[1] * d2.T @ d2)
    assert np.allclose(update_U(st, p, y).U, np.linalg.solve(a, rhs), atol=1e-10)


def test_update_U_fixed_point(rng):
    m, n = 4, 4
    y = rng.random((m * n, 2))
    st = initialize(UnfoldedMatrix(y, (m, n)), SolverParams(r=2))
    d1, d2 = dense_diff(m, n, 1), dense_diff(m, n, 2)
    # U solving (I + sum D^T D) U = y V + sum D^T D U is any U with y V = U
    u_star = y @ st.V
    st = replace(st, U=u_star, H1=d1 @ u_star, H2=d2 @ u_star)
    assert np.allclose(update_U(st, SolverParams(r=2), y).U, u_star, atol=1e-12)
    st2 = replace(st, U=u_star + 0.1)
    st2 = replace(st2, H1=d1 @ st2.U, H2=d2 @ st2.U)
    assert not np.allclose(update_U(st2, SolverParams(r=2), y).U, st2.U)


def test_update_U_constant_and_zero(rng):
    st, _ = random_state(rng)
    z = replace(st, S=np.zeros_like(st.S), D=np.zeros_like(st.D), L1=np.zeros_like(st.L1),
                L2=np.zeros_like(st.L2), L3=np.zeros_like(st.L3), H1=np.zeros_like(st.H1),
                H2=np.zeros_like(st.H2), W=np.ones_like(st.W))
    assert np.allclose(update_U(z, SolverParams(r=2), np.zeros_like(st.S)).U, 0)
    out = update_U(z, SolverParams(r=2), np.full(st.S.shape, 0.3)).U
    assert np.allclose(out, out[0])


def test_update_V_beats_random_rotations(rng):
    st, y = random_state(rng, b=5, r=3, m=4, n=4)
    st = replace(st, U=rng.standard_normal((16, 3)))
    p = SolverParams(r=3)
    new = update_V(st, p, y)
    g = y - (st.S + st.D) / np.maximum(st.W, p.w_floor) + st.L3 / st.rho
    best = np.sum(g * (st.U @ new.V.T))
    assert np.allclose(new.V.T @ new.V, np.eye(3), atol=1e-12)
    for _ in range(200):
        v = random_orthonormal(rng, 5, 3)
        assert np.sum(g * (st.U @ v.T)) <= best + 1e-10


def test_update_S_prox_and_limits(rng):
    st, y = random_state(rng)
    arg = st.W * (y - st.low_rank) - st.D + st.L3 / st.rho
    p = SolverParams(r=2, beta=0.3)
    expect = np.vectorize(scalar_soft)(arg, 0.3 / st.rho)
    assert np.allclose(update_S(st, p, y).S, expect, atol=1e-6)
    assert np.array_equal(update_S(st, SolverParams(r=2, beta=0.0), y).S, arg)
    big = st.rho * np.abs(arg).max()
    assert not update_S(st, SolverParams(r=2, beta=big), y).S.any()


def test_update_D_grouping_and_gamma_zero(rng):
    st, y = random_state(rng)
    omega = st.W * (y - st.low_rank) - st.S + st.L3 / st.rho
    p = SolverParams(r=2, gamma=0.2, l21_groups="bands")
    assert np.allclose(update_D(st, p, y).D, shrink_l21_columns(omega, 0.2 / st.rho))
    pc = SolverParams(r=2, gamma=0.2)
    fibers = omega.reshape(4, -1)
    assert np.allclose(update_D(st, pc, y).D, shrink_l21_columns(fibers, 0.2 / st.rho).reshape(omega.shape))
    assert update_D(st, SolverParams(r=2, gamma=0.0), y) is st
    raw = update_D(st, SolverParams(r=2, gamma=0.0, zero_gamma_disables_d=False), y)
    assert np.array_equal(raw.D, omega)
    assert not update_D(st, SolverParams(r=2, gamma=1e9), y).D.any()
    assert update_D(st, SolverParams(r=2, gamma=1.0, variant="baseline"), y) is st


def test_update_D_single_dominant_column():
    st = initialize(UnfoldedMatrix(np.ones((6, 3)), (2, 3)), SolverParams(r=1))
    st = replace(st, U=np.zeros_like(st.U), W=np.ones((6, 3)), L3=np.zeros((6, 3)))
    y = np.zeros((6, 3))
    y[:, 1] = 2.0
    out = update_D(st, SolverParams(r=1, gamma=1.0 * st.rho, l21_groups="bands"), y).D
    nrm = np.linalg.norm(y[:, 1])
    assert np.allclose(out[:, 1], y[:, 1] * (1 - 1.0 / nrm))
    assert not out[:, [0, 2]].any()


def test_update_W_scalar_oracle(rng):
    st, y = random_state(rng)
    p = SolverParams(r=2, alpha=0.7)
    w = update_W(st, p, y).W
    assert w.min() >= 0 and w.max() <= 1
    r = y - st.low_rank
    s = st.S + st.D - st.L3 / st.rho
    grid = np.linspace(0, 1, 200001)
    for idx in [(0, 0), (3, 1), (7, 2), (19, 0)]:
        f = st.rho / 2 * (grid * r[idx] - s[idx]) ** 2 + p.alpha / 2 * (1 - grid) ** 2
        assert abs(w[idx] - grid[np.argmin(f)]) < 1e-5
    assert np.allclose(update_W(st, SolverParams(r=2, alpha=1e9), y).W, 1.0, atol=1e-6)
    exact = replace(st, S=np.zeros_like(st.S))
    assert np.allclose(update_W(exact, p, exact.low_rank).W[st.L3 == 0], 1.0)
    for v in ("baseline", "baseline_a"):
        assert update_W(st, SolverParams(r=2, variant=v), y) is st


def test_update_multipliers(rng):
    st, y = random_state(rng)
    p = SolverParams(r=2, eta=1.0)
    new = update_multipliers(st, p, y)
    fid = st.W * (y - st.low_rank) - st.S - st.D
    assert np.allclose(new.L3 - st.L3, st.rho * fid)
    assert new.rho == st.rho
    capped = update_multipliers(replace(st, rho_max=st.rho * 1.5), SolverParams(r=2), y)
    assert capped.rho == st.rho * 1.5


def test_multipliers_unchanged_when_feasible(rng):
    y = rng.random((20, 3)) @ np.eye(3)
    st = initialize(UnfoldedMatrix(y, (4, 5)), SolverParams(r=3))
    new = update_multipliers(st, SolverParams(r=3), y)
    assert np.allclose(new.L3, 0, atol=1e-12) and np.allclose(new.L1, 0)
    assert new.rho == 2 * st.rho


@pytest.mark.parametrize("block", ["H", "S", "D", "W"])
def test_prox_blocks_minimise_lagrangian(rng, block):
    p = SolverParams(r=2, tau=0.5, beta=0.3, gamma=0.4)
    step = dict(slv.BLOCK_UPDATES)[block]
    attr = {"H": "H1", "S": "S", "D": "D", "W": "W"}[block]
    for _ in range(5):
        st, y = random_state(rng)
        new = step(st, p, y)
        base = augmented_lagrangian(new, p, y)
        assert base <= augmented_lagrangian(st, p, y) + 1e-9
        for _ in range(20):
            pert = getattr(new, attr) + 1e-3 * rng.standard_normal(getattr(new, attr).shape)
            if block == "W":
                pert = np.clip(pert, 0, 1)
            assert base <= augmented_lagrangian(replace(new, **{attr: pert}), p, y) + 1e-12


@pytest.mark.parametrize("block", ["U", "V"])
def test_subspace_blocks_minimise_their_objective(rng, block):
    p = SolverParams(r=2, tau=0.5, beta=0.3, gamma=0.4)
    step = dict(slv.BLOCK_UPDATES)[block]
    for _ in range(5):
        st, y = random_state(rng)
        new = step(st, p, y)
        assert slv.surrogate_lagrangian(new, p, y) <= slv.surrogate_lagrangian(st, p, y) + 1e-9
        # with unit weights the surrogate is the augmented Lagrangian itself
        ones = replace(st, W=np.ones_like(st.W))
        assert augmented_lagrangian(step(ones, p, y), p, y) <= augmented_lagrangian(ones, p, y) + 1e-9


# -- convergence and solve ----------------------------------------------------------


def test_check_convergence(rng):
    y = rng.random((20, 3))
    st = initialize(UnfoldedMatrix(y, (4, 5)), SolverParams(r=3))
    st = replace(st, S=y - st.low_rank)
    assert check_convergence(st, SolverParams(r=3), y) is Status.CONVERGED
    p = SolverParams(r=3, eps=1e-5)
    ny = np.sum(y * y)
    bump = np.zeros_like(st.S)
    bump[0, 0] = np.sqrt(2e-5 * ny)
    assert check_convergence(replace(st, S=st.S - bump), p, y) is Status.CONTINUE


def test_solve_exact_low_rank(rng):
    x = HsiCube((rng.random((64, 2)) @ rng.random((2, 6))).reshape(8, 8, 6))
    res = solve(x, SolverParams(r=2, tau=0.0, beta=0.0, gamma=0.0, max_iter=5))
    assert np.linalg.norm(res.x_hat.data - x.data) <= 1e-6 * np.linalg.norm(x.data)


def test_solve_case5_defaults_converge():
    x = low_rank_cube(64, 64, 10, 3, seed=0)
    y, _ = apply_case(x, 5, seed=100)
    res = solve(y, SolverParams(r=3))
    assert res.converged and res.iterations <= 40
    r = residuals(res.state, unfold3(y).data)
    assert max(r) <= 1e-5
    assert res.trace[-1].res_fidelity == pytest.approx(r[2])


def test_solve_variants_and_trace():
    x = low_rank_cube(32, 32, 8, 3, seed=1)
    y, _ = apply_case(x, 2, seed=5)
    base = solve(y, SolverParams(r=3, gamma=2.0, variant="baseline"), truth=x)
    assert np.all(base.w_hat.data == 1) and not base.d_hat.data.any()
    a = solve(y, SolverParams(r=3, gamma=2.0, variant=Variant.BASELINE_A))
    assert np.all(a.w_hat.data == 1) and a.d_hat.data.any()
    rho = base.trace.column("rho")
    assert np.all(np.diff(rho) >= 0) and rho.max() <= base.state.rho_max
    assert base.trace[-1].psnr == pytest.approx(psnr(x, base.x_hat))
    back = IterationTrace.from_csv(base.trace.to_csv())
    assert np.allclose(back.column("res_fidelity"), base.trace.column("res_fidelity"), rtol=1e-9)
    assert a.trace.to_csv().splitlines()[1].endswith(",")


def test_solve_is_deterministic():
    x = low_rank_cube(16, 16, 6, 2, seed=2)
    y, _ = apply_case(x, 5, seed=3)
    p = SolverParams(r=2, gamma=1.0)
    a, b = solve(y, p), solve(y, p)
    assert np.array_equal(a.x_hat.data, b.x_hat.data)
    assert a.trace.to_csv() == b.trace.to_csv()


def test_nonfinite_state_is_reported(monkeypatch):
    x = low_rank_cube(16, 16, 4, 2, seed=0)

    def poison(state, params, y):
        s = state.S.copy()
        s[0, 0] = np.nan
        return replace(state, S=s)

    monkeypatch.setattr(slv, "BLOCK_UPDATES", slv.BLOCK_UPDATES + (("poison", poison),))
    with pytest.raises(NonFiniteState) as info:
        solve(x, SolverParams(r=2))
    assert info.value.iteration == 1 and info.value.variable == "S"
