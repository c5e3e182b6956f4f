import math

import numpy as np
import pytest
from asymptotics import (
    CSV_COLUMNS,
    SubadditivityCheck,
    SweepReport,
    SweepRow,
    TheoryConstants,
    argmin_trial_scale,
    check_strict_subadditivity,
    fit_powerlaw,
    gamma_constant,
    limit_profile,
    model_trial_energy,
    optimal_trial_scale,
    partition_chains,
    predicted_energy,
    predicted_epsilon,
    profile_error,
    run_sweep,
    sweep_couplings,
    theory_constants,
)
from coefficients import (
    PotentialSpec,
    WeightSpec,
    realize_potential,
    realize_weight,
)
from constants import SUBADDITIVITY_MARGIN, Case
from fractional_operator import dirichlet_energy
from ground_state import solve_ground_state
from minimizer import FlowOptions, MinimizationContext
from scipy.optimize import minimize_scalar
from spectral_grid import Grid, lp_norm_p
from utils import DomainError, ResolutionError

OPTIONS = FlowOptions(tol=1e-8)


def synthetic_theory(case, d=2, s=0.5, l=1.0):
    gamma1, gamma2, C0, C_bar = 2.0, 3.0, 0.05, 0.025
    return TheoryConstants(
        d=d,
        s=s,
        a_star=11.7,
        l=l,
        case=case,
        gamma=gamma_constant(case, s, d, gamma1, gamma2, C0, C_bar, l),
        gamma1=gamma1,
        gamma2=gamma2,
        C0=C0,
        C_bar=C_bar,
    )


def test_gamma_constant_branches():
    args = (0.5, 2, 2.0, 3.0, 0.05, 0.025, 1.0)
    ratio = 2 / 3
    weight = ratio**2 * 0.025 * 2.0
    potential = ratio * 0.05 * 3.0
    assert gamma_constant(Case.Q_DOMINANT, *args) == pytest.approx(weight)
    assert gamma_constant(Case.P_DOMINANT, *args) == pytest.approx(potential)
    assert gamma_constant(Case.BALANCED, *args) == pytest.approx(
        weight + potential
    )


@pytest.mark.parametrize("case", list(Case))
@pytest.mark.parametrize("d, s, l", [(2, 0.5, 1.0), (1, 1.0, 2.0)])
def test_predicted_laws_minimize_the_model(case, d, s, l):
    tc = synthetic_theory(case, d, s, l)
    a = tc.a_star * (1 - 2.0**-6)
    result = minimize_scalar(
        lambda x: model_trial_energy(a, math.exp(x), tc),
        bracket=(-2.0, 2.0),
        tol=1e-12,
    )
    t_opt = optimal_trial_scale(a, tc)
    assert math.exp(result.x) == pytest.approx(t_opt, rel=1e-5)
    assert result.fun == pytest.approx(predicted_energy(a, tc), rel=1e-9)
    assert predicted_epsilon(a, tc) == pytest.approx(
        (2 * s / d) ** (1 / (2 * s)) / t_opt
    )


def test_predicted_laws_follow_their_slopes():
    tc = synthetic_theory(Case.Q_DOMINANT)
    gaps = np.array([2.0**-k for k in range(3, 9)])
    a = tc.a_star - gaps
    energies = [predicted_energy(x, tc) for x in a]
    epsilons = [predicted_epsilon(x, tc) for x in a]
    assert fit_powerlaw(gaps, energies).slope == pytest.approx(0.5)
    assert fit_powerlaw(gaps, epsilons).slope == pytest.approx(0.5)
    assert tc.energy_slope == pytest.approx(0.5)
    assert tc.eps_slope == pytest.approx(0.5)
    assert fit_powerlaw(gaps, epsilons).prefactor == pytest.approx(
        tc.eps_prefactor
    )


def test_predictions_need_a_below_threshold():
    tc = synthetic_theory(Case.BALANCED)
    for a in (tc.a_star, tc.a_star + 1.0):
        with pytest.raises(DomainError):
            predicted_energy(a, tc)
        with pytest.raises(DomainError):
            optimal_trial_scale(a, tc)


def test_fit_powerlaw_on_exact_data():
    xs = np.array([0.1, 0.2, 0.4, 0.8, 1.6])
    fit = fit_powerlaw(xs, 3.0 * xs**0.7)
    assert fit.slope == pytest.approx(0.7)
    assert fit.prefactor == pytest.approx(3.0)
    assert fit.r_squared == pytest.approx(1.0)
    with pytest.raises(DomainError):
        fit_powerlaw(xs[:3], xs[:3])
    with pytest.raises(DomainError):
        fit_powerlaw(xs, -xs)


def test_sweep_couplings_approach_threshold():
    assert sweep_couplings(8.0, [1, 2, 3]) == [4.0, 6.0, 7.0]


def test_partition_chains():
    assert partition_chains(list(range(3, 10)), 3) == [
        [3, 4, 5],
        [6, 7],
        [8, 9],
    ]
    assert partition_chains([3, 4], 5) == [[3], [4]]
    assert partition_chains([3, 4], 0) == [[3, 4]]


def test_sweep_row_csv_values():
    row = SweepRow(
        k=7,
        a_k=1.5,
        a_star_minus_a=0.25,
        I1=0.1,
        I1_pred=float("nan"),
        epsilon=0.5,
        eps_pred=0.5,
        lambda_a=-2.0,
        eps2s_lambda=-1.0,
        zbar_x=0.0,
        zbar_y=0.0,
        profile_err=1e-3,
        resolved=True,
    )
    values = row.csv_values()
    assert len(values) == len(CSV_COLUMNS)
    assert values[0] == "7"
    assert values[1] == "1.5"
    assert values[4] == "nan"
    assert values[-1] == "true"
    text = SweepReport([row], synthetic_theory(Case.BALANCED)).csv_text()
    header, line = text.splitlines()
    assert header == ",".join(CSV_COLUMNS)
    assert line == ",".join(values)


def test_theory_constants_of_quintic_problem(
    exact_ground, potential_spec_1d, weight_spec_1d
):
    tc = theory_constants(exact_ground, potential_spec_1d, weight_spec_1d)
    # q - 2s = 1 is below p = 2
    assert tc.case == Case.Q_DOMINANT
    assert tc.l == pytest.approx(1.0)
    assert tc.energy_slope == pytest.approx(1 / 3)
    assert tc.eps_slope == pytest.approx(1 / 3)
    assert not tc.truncated
    payload = tc.to_dict()
    assert payload["case"] == "Q_DOMINANT"
    assert payload["energy_prefactor"] == pytest.approx(tc.energy_prefactor)


def test_limit_profile_has_unit_mass_and_kinetic_energy(exact_ground):
    W = limit_profile(exact_ground, exact_ground.grid)
    assert lp_norm_p(W, 2.0) == pytest.approx(1.0, rel=1e-10)
    assert dirichlet_energy(W, 1.0) == pytest.approx(1.0, rel=1e-8)


def test_profile_error_recovers_translation(exact_ground):
    w = limit_profile(exact_ground, exact_ground.grid, (0.3,))
    err, z0 = profile_error(w, exact_ground)
    assert err < 1e-6
    assert z0[0] == pytest.approx(0.3, abs=1e-4)


def test_profile_error_of_another_shape(exact_ground):
    W = limit_profile(exact_ground, exact_ground.grid)
    err, _ = profile_error((W * W).normalized(), exact_ground)
    assert err > 1e-2


def test_strict_subadditivity_below_threshold(context_1d, small_ground_1d):
    checks = check_strict_subadditivity(
        context_1d,
        context_1d.a,
        splits=((1.0, 0.5),),
        options=OPTIONS,
        ground=small_ground_1d,
    )
    (check,) = checks
    assert check.holds
    assert check.margin > SUBADDITIVITY_MARGIN
    assert check.margin == pytest.approx(check.I_parts - check.I_whole)


@pytest.mark.parametrize(
    "excess, holds",
    [(2.0, True), (1.01, True), (0.99, False), (0.0, False), (-1.0, False)],
)
def test_subadditivity_needs_a_margin(excess, holds):
    whole = 0.25
    check = SubadditivityCheck(
        mass=1.0,
        part=0.5,
        I_whole=whole,
        I_parts=whole + excess * SUBADDITIVITY_MARGIN,
    )
    assert check.holds is holds


def test_sweep_far_from_threshold(small_ground_1d, coefficients_1d):
    potential, weight = coefficients_1d
    a_star = small_ground_1d.a_star
    couplings = [r * a_star for r in (0.3, 0.4, 0.5, 0.6)]
    report, fields = run_sweep(
        small_ground_1d,
        potential,
        weight,
        [],
        OPTIONS,
        couplings=couplings,
        progress=False,
    )
    assert [row.k for row in report.rows] == [0, 1, 2, 3]
    assert len(fields) == 4
    energies = [row.I1 for row in report.rows]
    # I(a) decreases in a
    assert all(x > y for x, y in zip(energies, energies[1:]))
    for row in report.rows:
        assert row.resolved
        assert row.I1 <= row.trial_bound
        assert row.a_star_minus_a == pytest.approx(a_star - row.a_k)
        assert row.eps2s_lambda == pytest.approx(
            row.epsilon**2 * row.lambda_a
        )
    assert set(report.fits) == {"energy", "epsilon"}
    summary = report.summary()
    assert summary["resolved_rows"] == 4
    assert summary["last_resolved"]["k"] == 3


def test_sweep_with_too_few_rows_keeps_partial_results(
    small_ground_1d, coefficients_1d
):
    potential, weight = coefficients_1d
    a_star = small_ground_1d.a_star
    with pytest.raises(
        ResolutionError, match="insufficient resolution"
    ) as info:
        run_sweep(
            small_ground_1d,
            potential,
            weight,
            [],
            OPTIONS,
            couplings=[0.4 * a_star, 0.5 * a_star],
            progress=False,
        )
    report, fields = info.value.partial
    assert len(report.rows) == 2
    assert len(fields) == 2
    assert report.fits == {}


NEAR_THRESHOLD_K = (11, 12, 13, 14, 15)


@pytest.mark.slow
def test_near_threshold_blow_up_laws():
    grid = Grid(1, 2048, 24.0)
    ground = solve_ground_state(grid, 1.0)
    # q - 2s = 1 < p = 2, and a weak potential keeps the weight term leading
    potential = realize_potential(
        PotentialSpec(v_inf=1.0, x0=(0.0,), p=2.0, beta=1.0, c=0.01), grid, 1.0
    )
    weight = realize_weight(
        WeightSpec(m_inf=0.05, x0=(0.0,), q=3.0, c2=1.0), grid, 1.0
    )
    report, _ = run_sweep(
        ground,
        potential,
        weight,
        NEAR_THRESHOLD_K,
        FlowOptions(tol=1e-8, max_steps=300000),
        progress=False,
    )
    theory = report.theory
    assert theory.case == Case.Q_DOMINANT
    assert theory.l == pytest.approx(1.0)
    assert all(row.resolved for row in report.rows)

    for name, expected in (
        ("energy", theory.energy_slope),
        ("epsilon", theory.eps_slope),
    ):
        fit = report.fits[name]
        assert fit.slope == pytest.approx(expected, rel=0.05)
        assert fit.r_squared >= 0.999

    for row in report.rows:
        assert row.I1 / row.I1_pred == pytest.approx(1.0, rel=0.1)
        assert row.epsilon / row.eps_pred == pytest.approx(1.0, rel=0.1)
        assert row.I1 <= row.trial_bound
    last = report.rows[-1]
    assert last.I1 / last.I1_pred == pytest.approx(1.0, rel=0.05)
    assert last.epsilon / last.eps_pred == pytest.approx(1.0, rel=0.05)

    limit = -4 * theory.s / theory.d
    assert last.eps2s_lambda == pytest.approx(limit, rel=0.01)

    errors = [row.profile_err for row in report.rows]
    assert all(b <= 1.05 * a + 1e-4 for a, b in zip(errors, errors[1:]))
    assert errors[-1] <= 0.05

    ctx = MinimizationContext(
        V=potential.V,
        m=weight.m,
        a=last.a_k,
        s=1.0,
        v_inf=1.0,
        a_star=ground.a_star,
        x0=potential.x0,
    )
    t_opt = optimal_trial_scale(last.a_k, theory)
    t_min, bound = argmin_trial_scale(
        last.a_k, ground, ctx, t_opt / 3, 1.8 * t_opt
    )
    assert t_min == pytest.approx(t_opt, rel=0.05)
    assert bound <= last.trial_bound * (1 + 1e-6)
    assert bound == pytest.approx(last.trial_bound, rel=1e-2)
