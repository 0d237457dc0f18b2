import numpy as np
import pytest

from thinhomog.fem import ConvergenceError, l2_error
from thinhomog.geometry import CellSpec, Profile, ThinDomainSpec
from thinhomog.homogenize import homogenized_coefficients
from thinhomog.limit1d import (
    CosineForcing, LimitProblem, TableForcing, analytic_limit_cosine, solve_limit)
from thinhomog.mesh import CapacityError, resolution_for
from thinhomog.verify import (
    BoundaryDatum, ResolutionPolicy, SweepError,
    apriori_bounded, convergence_study, error_vs_limit, fit_slope, lemma31_harness,
    lemma31_verdicts, non_monotone_pairs, solve_epsilon_problem)

FLAT_G, FLAT_H = Profile.constant(1.), Profile.constant(0.)
G = Profile.sine(1., [(0.5, 1)])
H = Profile.cosine(1., [(1., 1)])
COSINE = CosineForcing(1)
UNIT = TableForcing(np.array([0., 1.]), np.array([1., 1.]))


def flat_limit(m: int = 1024):
    return solve_limit(LimitProblem(1., 1., COSINE, m))


def test_constant_forcing():
    spec = ThinDomainSpec(0.1, 1.5, FLAT_G, FLAT_H)
    run = solve_epsilon_problem(spec, UNIT, (16, 8))
    np.testing.assert_allclose(run.u.values, 1., atol=1e-8)
    x = np.linspace(0., 1., 9)
    abs_err, rel_err = error_vs_limit(run, x, np.ones_like(x))
    assert abs_err < 1e-8 and rel_err < 1e-8
    # zero limit, the error is the norm itself
    abs_err, rel_err = error_vs_limit(run, x, np.zeros_like(x))
    assert abs_err == pytest.approx(run.norms['u'])
    assert rel_err == pytest.approx(1.)


@pytest.mark.parametrize('epsilon', [0.2, 0.1])
def test_flat_exactness(epsilon):
    spec = ThinDomainSpec(epsilon, 1.5, FLAT_G, FLAT_H)
    run = solve_epsilon_problem(spec, COSINE, resolution_for(spec, 128))
    _, rel_err = error_vs_limit(run, *flat_limit())
    assert rel_err < 1e-3
    assert run.layer_error == 0.
    for value in run.norms.values():
        assert np.isfinite(value)


def test_flat_refinement_rate():
    spec = ThinDomainSpec(0.2, 1.5, FLAT_G, FLAT_H)
    exact = analytic_limit_cosine(1., 1., 1)
    errors = []
    for nx in (32, 64):
        run = solve_epsilon_problem(spec, COSINE, (nx, 8))
        errors.append(l2_error(run.mesh, run.u.values, lambda x1, x2: exact(x1)))
    assert np.log2(errors[0] / errors[1]) >= 1.8


def test_flat_sweep():
    base = ThinDomainSpec(0.2, 1.5, FLAT_G, FLAT_H)
    policy = ResolutionPolicy(points_per_period=128)
    report = convergence_study(
        base, COSINE, [0.2, 0.1, 0.05], flat_limit(), policy, progress=False)
    assert report.exact
    assert report.slope is None
    assert report.verdicts == {'apriori_bounds': True, 'flat_exact': True}
    assert report.passed
    assert [run['epsilon'] for run in report.runs] == [0.2, 0.1, 0.05]
    assert report.refinement_delta is not None
    assert report.smallest_affordable_epsilon is not None
    assert 'extension' in report.to_json()['note']


def test_sweep_workers():
    base = ThinDomainSpec(0.2, 1.5, G, H)
    policy = ResolutionPolicy(points_per_period=4)
    limit = flat_limit(256)
    serial = convergence_study(
        base, COSINE, [0.4, 0.3, 0.2], limit, policy,
        refinement_check=False, progress=False)
    pooled = convergence_study(
        base, COSINE, [0.4, 0.3, 0.2], limit, policy,
        workers=2, refinement_check=False, progress=False)
    assert serial.runs == pooled.runs


def test_refinement_over_budget():
    base = ThinDomainSpec(0.2, 1.5, FLAT_G, FLAT_H)
    # sweep meshes hold 128 triangles, the doubled one 256
    policy = ResolutionPolicy(points_per_period=8, max_elements=200)
    report = convergence_study(
        base, COSINE, [0.2, 0.1, 0.05], flat_limit(64), policy, progress=False)
    assert len(report.runs) == 3
    assert report.refinement_delta is None
    assert 'exceeding the cap of 200' in report.refinement_skipped
    assert report.smallest_affordable_epsilon is not None
    assert report.to_json()['refinement_skipped'] == report.refinement_skipped


@pytest.mark.parametrize('eps_list', [[0.1], [0.2, 0.1], [0.1, 0.2, 0.05], [0.2, 0.2, 0.1]])
def test_sweep_preconditions(eps_list):
    base = ThinDomainSpec(0.2, 1.5, FLAT_G, FLAT_H)
    with pytest.raises(ValueError):
        convergence_study(base, COSINE, eps_list, flat_limit(64), ResolutionPolicy())


def test_sweep_capacity():
    base = ThinDomainSpec(0.2, 1.5, G, H)
    policy = ResolutionPolicy(points_per_period=8, max_elements=20_000)
    with pytest.raises(CapacityError) as info:
        convergence_study(base, COSINE, [0.2, 0.1, 0.01], flat_limit(64), policy)
    assert info.value.smallest is not None


def test_sweep_failure():
    base = ThinDomainSpec(0.2, 1.5, G, H)
    policy = ResolutionPolicy(points_per_period=4, max_iter=1)
    with pytest.raises(SweepError) as info:
        convergence_study(base, COSINE, [0.3, 0.2, 0.1], flat_limit(64), policy,
                          progress=False)
    assert info.value.epsilon == 0.3
    assert info.value.partial.runs == []
    assert isinstance(info.value.cause, ConvergenceError)


def test_sweep_helpers():
    assert fit_slope([0.4, 0.2, 0.1], [0.16, 0.04, 0.01]) == pytest.approx(2.)
    assert fit_slope([0.2, 0.1], [0., 1.]) is None
    assert non_monotone_pairs([3., 2., 2.5, 1.]) == 1
    assert non_monotone_pairs([3., 2., 1.]) == 0

    runs = [{'norm_u': 1., 'norm_d1u': 1., 'norm_d2u_scaled': 1.},
            {'norm_u': 2.9, 'norm_d1u': 0.5, 'norm_d2u_scaled': 1.}]
    assert apriori_bounded(runs)
    runs[1]['norm_d2u_scaled'] = 3.5
    assert not apriori_bounded(runs)


def test_boundary_datum():
    linear = BoundaryDatum.parse('linear')
    assert linear.monomial_degree == 1
    assert not linear.constant
    assert linear.describe() == 'linear'
    assert BoundaryDatum.parse('constant').constant
    quad = BoundaryDatum.parse('[0, 0, 2]')
    assert quad(np.array([2.]))[0] == pytest.approx(8.)
    assert quad.monomial_degree == 2
    assert BoundaryDatum.parse(quad.describe()).describe() == quad.describe()
    assert BoundaryDatum.parse('[1, 1]').monomial_degree is None
    with pytest.raises(ValueError):
        BoundaryDatum.parse('cubic')


def test_lemma31_constant():
    datum = BoundaryDatum([2.5])
    runs = lemma31_harness(2., [0.4, 0.3, 0.2], datum, progress=False)
    for run in runs:
        assert run.mean == pytest.approx(2.5)
        assert run.lhs37 < 1e-10
        assert run.energy38 < 1e-10
        assert run.ratio38 == 0.
    assert lemma31_verdicts(runs, datum)['verdicts'] == {'constant_exact': True}


def test_lemma31_scaling():
    datum = BoundaryDatum.parse('linear')
    runs = lemma31_harness(2., [0.4, 0.3, 0.2], datum, progress=False)
    for run in runs:
        assert run.mean == pytest.approx(0., abs=1e-14)
        assert run.norm_u0_sq == pytest.approx(2. / 3. * run.epsilon ** 6)
        assert run.norm_du0_sq == pytest.approx(2. * run.epsilon ** 2)
        assert run.lhs37 >= 0. and run.energy38 > 0.
    result = lemma31_verdicts(runs, datum)
    assert result['verdicts'] == {
        'ratio37_bounded': True, 'ratio38_bounded': True, 'slope37': True}
    assert result['slope37_expected'] == pytest.approx(7.)

    with pytest.raises(ValueError):
        lemma31_harness(1., [0.4, 0.3], datum, progress=False)


@pytest.mark.slow
def test_main_experiment():
    g, h = Profile.sine(1., [(0.5, 1)]), Profile.cosine(1., [(1., 1)])
    coeffs = homogenized_coefficients(CellSpec(g, h.min), h, 32)
    limit = solve_limit(LimitProblem(
        coeffs.q_hat, coeffs.mass_coeff, COSINE.weak_limit(coeffs.mass_coeff), 256))
    report = convergence_study(
        ThinDomainSpec(0.2, 1.5, g, h), COSINE, [0.2, 0.1, 0.05], limit,
        ResolutionPolicy(points_per_period=16, tol=1e-8), progress=False)
    rel = [run['rel_err'] for run in report.runs]
    assert non_monotone_pairs(rel) <= 1
    assert rel[-1] < 0.5 * rel[0]
    assert report.verdicts['apriori_bounds']
    assert report.passed
    assert report.slope is not None and report.slope > 0.
