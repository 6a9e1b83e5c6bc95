import numpy as np
import pytest

from inflbetareg.tuning import (
    NonConvergenceError,
    TuningGrid,
    default_grids,
    select_alpha,
    sqv,
    standardized_estimates,
)


def test_sqv_values():
    assert sqv([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert sqv([0.1, 0.2], [0.1, 0.16]) == pytest.approx(0.02, abs=1e-15)
    rng = np.random.default_rng(4)
    a, b = rng.normal(size=3), rng.normal(size=3)
    assert sqv(a, b) == pytest.approx(np.sqrt(np.sum((a - b) ** 2)) / 3.0, abs=1e-15)
    with pytest.raises(ValueError):
        sqv([1.0], [1.0, 2.0])


def test_standardized_estimates():
    assert standardized_estimates([0.0], [1.0], 50)[0] == 0.0
    assert standardized_estimates([2.0], [0.5], 100)[0] == pytest.approx(0.4)
    with pytest.raises(ValueError):
        standardized_estimates([1.0], [0.0], 100)


def test_default_grids_constants():
    continuous, discrete = default_grids()
    cont_points = continuous.points(continuous.start, continuous.first_phase_end)
    assert cont_points == pytest.approx(np.arange(0.0, 0.21, 0.02).tolist())
    assert len(cont_points) == 11
    disc_points = discrete.points(discrete.start, discrete.first_phase_end)
    assert disc_points == pytest.approx(np.arange(0.0, 0.51, 0.05).tolist())
    assert len(disc_points) == 11
    assert continuous.L == discrete.L == 0.02
    assert continuous.alpha_max == 0.5 and discrete.alpha_max == 1.0
    assert continuous.m == discrete.m == 3


def test_grid_validation():
    with pytest.raises(ValueError):
        TuningGrid(start=0.3, first_phase_end=0.2, spacing=0.02, alpha_max=0.5)
    with pytest.raises(ValueError):
        TuningGrid(start=0.0, first_phase_end=0.2, spacing=-0.1, alpha_max=0.5)


def scripted_fit(jumps, p=3, n=100):
    """Callable whose standardized estimates move by the scripted jump sizes.

    ``jumps[alpha]`` is the cumulative first-coordinate displacement at that
    tuning value; ses are one so SQV = |difference| * sqrt(n) / p ... kept
    simple by returning estimates already on the standardized scale.
    """

    def fit(alpha):
        base = np.zeros(p)
        base[0] = jumps(alpha) * np.sqrt(n)
        return base, np.ones(p)

    return fit


def test_constant_estimates_select_zero():
    continuous, _ = default_grids()
    trace = select_alpha("continuous", scripted_fit(lambda a: 0.0), continuous, 100)
    assert trace.chosen_alpha == 0.0
    assert not trace.fallback_to_zero
    assert all(v == 0.0 for _, _, v in trace.sqv_values)


def test_single_early_jump_selects_next_window_start():
    continuous, _ = default_grids()
    # the only jump is between 0 and 0.02: displacement 0.09 there, flat after
    trace = select_alpha(
        "continuous", scripted_fit(lambda a: 0.0 if a < 0.01 else 0.09), continuous, 100
    )
    assert trace.chosen_alpha == pytest.approx(0.04)


def test_always_unstable_falls_back_to_zero():
    continuous, _ = default_grids()
    counter = {"k": 0}

    def fit(alpha):
        counter["k"] += 1
        base = np.zeros(3)
        base[0] = counter["k"] * 10.0  # every consecutive pair jumps
        return base, np.ones(3)

    trace = select_alpha("continuous", fit, continuous, 100)
    assert trace.chosen_alpha == 0.0
    assert trace.fallback_to_zero


def test_nonconvergence_treated_as_instability():
    continuous, _ = default_grids()

    def fit(alpha):
        if abs(alpha - 0.02) < 1e-12:
            raise NonConvergenceError("scripted failure")
        return np.zeros(3), np.ones(3)

    trace = select_alpha("continuous", fit, continuous, 100)
    # the pair (0, 0.02) fails through the failed fit; the next window starts
    # past that pair and everything there is flat
    assert trace.chosen_alpha == pytest.approx(0.04)
    assert trace.failed_alphas == [0.02]


def test_trace_is_deterministic_and_monotone():
    continuous, _ = default_grids()
    fit = scripted_fit(lambda a: 0.0 if a < 0.05 else 0.5)
    t1 = select_alpha("continuous", fit, continuous, 100)
    t2 = select_alpha("continuous", fit, continuous, 100)
    assert t1.chosen_alpha == t2.chosen_alpha
    assert t1.evaluated_alphas == t2.evaluated_alphas
    phase1 = t1.evaluated_alphas[:11]
    assert all(a < b for a, b in zip(phase1, phase1[1:]))
