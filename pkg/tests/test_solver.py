from __future__ import annotations

import numpy as np
import pytest

from gsep.frames import Wavelet, build_gabor_frame, build_shearlet_frame, build_wavelet_frame
from gsep.grid import FrequencyGrid, StripMask, apply_mask, l2
from gsep.solver import (SeparationProblem, SolverError, SolverOptions, default_lambda, residual_report,
                         solve, solve_per_scale)

from oracles import lp_oracle, toy_instance

LP_ITERS = 5000


@pytest.mark.parametrize("seed", range(4))
def test_lp_oracle_equivalence(seed):
    frames, mask, y = toy_instance(seed)
    ref = lp_oracle(frames, mask, y)
    r = solve(SeparationProblem(y, mask, frames, options=SolverOptions(max_iters=LP_ITERS, tol=1e-9)))
    assert abs(r.objective[-1] - ref) <= 1e-4
    assert not np.any(np.concatenate([c.imag.ravel() for c in r.components]))


def test_single_atom_recovery():
    W = build_wavelet_frame(FrequencyGrid(16))
    f = W.atom(Wavelet(2, (1, 2)))
    r = solve(SeparationProblem(f, None, [W], options=SolverOptions(max_iters=200)))
    assert l2(r.components[0] - f) < 1e-6 * l2(f)


def test_constrained_feasible_at_convergence():
    frames, mask, y = toy_instance(7)
    opt = SolverOptions(max_iters=20000, tol=1e-8)
    r = solve(SeparationProblem(y, mask, frames, options=opt))
    assert r.converged
    assert l2(apply_mask(mask, sum(r.components)) - y) <= opt.tol * l2(y)
    # windowed means of the objective trace do not increase after the burn-in;
    # primal-dual iterates are not monotone, so bumps up to 1e-3 relative are allowed
    obj = np.array(r.objective[opt.burn_in:])
    means = obj[: len(obj) // 50 * 50].reshape(-1, 50).mean(axis=1)
    assert np.all(np.diff(means) <= 1e-3 * means[0])
    assert means[-1] < means[0]


def test_unconstrained_approaches_constrained():
    frames, mask, y = toy_instance(3)
    opt = SolverOptions(max_iters=LP_ITERS, tol=1e-10)
    c = solve(SeparationProblem(y, mask, frames, options=opt))
    for reg in ("l1", "l2sq"):
        u = solve(SeparationProblem(y, mask, frames, "unconstrained", 1e4, reg, opt))
        fit = sum(float(np.sum(np.abs(fr.analyze(x).data))) for fr, x in zip(frames, u.components))
        assert abs(fit - c.objective[-1]) < 0.01 * c.objective[-1]


def test_unconstrained_small_lambda_shrinks_to_zero():
    frames, mask, y = toy_instance(2)
    u = solve(SeparationProblem(y, mask, frames, "unconstrained", 1e-3, "l1",
                                SolverOptions(max_iters=2000)))
    assert sum(l2(x) for x in u.components) < 1e-6


def test_determinism():
    frames, mask, y = toy_instance(5)
    opt = SolverOptions(max_iters=300)
    a = solve(SeparationProblem(y, mask, frames, options=opt))
    b = solve(SeparationProblem(y, mask, frames, options=opt))
    assert a.objective == b.objective and a.residual == b.residual
    assert all(np.array_equal(x, z) for x, z in zip(a.components, b.components))


def test_problem_validation():
    g = FrequencyGrid(16)
    W = build_wavelet_frame(g)
    y = np.zeros((16, 16))
    m = StripMask(16, 1)
    with pytest.raises(SolverError):
        SeparationProblem(y, m, [])
    with pytest.raises(SolverError):
        SeparationProblem(y, m, [W], mode="lasso")
    with pytest.raises(SolverError):
        SeparationProblem(y, m, [W], mode="unconstrained", lam=0.0)
    with pytest.raises(SolverError):
        SeparationProblem(y, m, [W], reg="huber")
    with pytest.raises(SolverError):
        SeparationProblem(np.zeros((32, 32)), StripMask(32, 1), [W])


def test_divergence_is_reported():
    frames, mask, y = toy_instance(1)
    with pytest.raises(SolverError):
        solve(SeparationProblem(y, mask, frames, options=SolverOptions(step_scale=1e308, max_iters=50)))


def test_per_scale_zero_band_and_order():
    frames, mask, y = toy_instance(4)
    opt = SolverOptions(max_iters=200)
    probs = {2: SeparationProblem(y, mask, frames, options=opt),
             3: SeparationProblem(np.zeros_like(y), mask, frames, options=opt),
             4: SeparationProblem(2 * y, mask, frames, "unconstrained", 1.0, "l1", opt)}
    out = solve_per_scale(probs, default_lambda)
    assert out[3].iterations == 0 and all(not x.any() for x in out[3].components)
    rev = solve_per_scale(dict(reversed(list(probs.items()))), default_lambda)
    for j in probs:
        assert out[j].objective == rev[j].objective
    alone = solve(SeparationProblem(2 * y, mask, frames, "unconstrained", default_lambda(4), "l1", opt))
    assert out[4].objective == alone.objective


def test_per_scale_failure_is_isolated():
    frames, mask, y = toy_instance(6)
    bad = SeparationProblem(y, mask, frames, options=SolverOptions(step_scale=1e308, max_iters=20))
    good = SeparationProblem(y, mask, frames, options=SolverOptions(max_iters=20))
    out = solve_per_scale({1: bad, 2: good}, workers=2)
    assert isinstance(out[1], SolverError) and out[2].iterations == 20


def test_default_lambda():
    assert [default_lambda(j) for j in (0, 2, 4)] == [1.0, 16.0, 256.0]


def test_residual_report():
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal((2, 16, 16))
    b *= l2(a) / l2(b)
    errs, total = residual_report([a, b], [a, b])
    assert errs == [0.0, 0.0] and total == 0
    # swapped equal-energy components: each error is sqrt(2 - 2<a,b>/|a|^2)
    errs, total = residual_report([b, a], [a, b])
    expect = np.sqrt(2 - 2 * np.vdot(a, b).real / l2(a) ** 2)
    assert np.allclose(errs, expect, rtol=1e-12) and abs(total - 2 * expect) < 1e-12
    errs, total = residual_report([a, b], [a, np.zeros_like(b)])
    assert errs[1] is None and total == 0


def test_three_frame_separation_smoke():
    # three components at n=64, j=2 of their shared band: the solve runs and stays feasible
    g = FrequencyGrid(64)
    frames = [build_wavelet_frame(g), build_shearlet_frame(g), build_gabor_frame(g, unit=1)]
    rng = np.random.default_rng(2)
    y = apply_mask(StripMask(64, 2), rng.standard_normal((64, 64)))
    r = solve(SeparationProblem(y, StripMask(64, 2), frames, options=SolverOptions(max_iters=30)))
    assert r.iterations == 30 and l2(apply_mask(StripMask(64, 2), sum(r.components)) - y) < 1e-10 * l2(y)
