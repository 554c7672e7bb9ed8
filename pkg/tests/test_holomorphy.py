import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from paraholo.acceptance import model_setup
from paraholo.coeffs import AffineFamily, PiecewiseCoefficient, constant, indicator, model_n0
from paraholo.discretize import assemble_perturbation
from paraholo.holomorphy import (
    NeumannDivergence,
    RegionError,
    cauchy_residual,
    region_radius_part1,
    region_radius_part2,
    resolvent_apply,
    sample_polydisc,
    verify_factor_two,
)
from paraholo.opnorm import NormKind, OperatorNormEstimate, solution_operator_norm
from paraholo.poles import pencil_poles, sequence_k


def _fake_norm(value, target=NormKind.H1K, k=10.0):
    return OperatorNormEstimate(value, (NormKind.L2, target), k, 1, 0.0, [value])


def _family_pm():
    return AffineFamily(model_n0(), (indicator(0.0, 1.0),))


@pytest.fixture(scope="module")
def k30():
    op, perts, fam = model_setup(30.0)
    opn = solution_operator_norm(op, NormKind.L2, NormKind.H1K)
    return op, perts, fam, region_radius_part1(opn, fam)


def test_radius_formula():
    region = region_radius_part1(_fake_norm(50.0), _family_pm())
    assert region.per_mode_radii[0] == pytest.approx(0.01)


def test_radius_homogeneous_in_norm():
    a = region_radius_part1(_fake_norm(50.0), _family_pm())
    b = region_radius_part1(_fake_norm(100.0), _family_pm())
    np.testing.assert_allclose(b.per_mode_radii, a.per_mode_radii / 2)


@settings(max_examples=40)
@given(st.lists(st.floats(0.1, 5.0), min_size=1, max_size=4), st.floats(1.0, 500.0))
def test_corners_satisfy_condition(amps, opn):
    modes = tuple(indicator(0.2 * j, 0.2 * j + 0.2, value=a) for j, a in enumerate(amps))
    fam = AffineFamily(model_n0(), modes)
    for rule in ("equal_budget", "equal_radius", np.arange(1, len(amps) + 1)):
        region = region_radius_part1(_fake_norm(opn), fam, rule)
        assert np.all(region.per_mode_radii > 0)
        corner = region.per_mode_radii * np.exp(1j * np.linspace(0, 3, len(amps)))
        assert region.condition_lhs(corner) <= 0.5 + 1e-12


def test_zero_mode_gets_unbounded_radius():
    fam = AffineFamily(model_n0(), (indicator(0.0, 1.0), constant(0.0)))
    region = region_radius_part1(_fake_norm(10.0), fam)
    assert np.isinf(region.per_mode_radii[1])
    assert region.per_mode_radii[0] == pytest.approx(0.05)


def test_radius_halves_when_k_doubles():
    ratios = []
    for k in np.geomspace(10, 100, 15):
        r1 = region_radius_part1(solution_operator_norm(model_setup(k)[0], NormKind.L2, NormKind.H1K), _family_pm())
        r2 = region_radius_part1(solution_operator_norm(model_setup(2 * k)[0], NormKind.L2, NormKind.H1K), _family_pm())
        ratios.append(r2.per_mode_radii[0] / r1.per_mode_radii[0])
    ratios = np.array(ratios)
    assert 0.45 <= np.median(ratios) <= 0.6
    assert np.all((ratios > 0.3) & (ratios < 0.75))


def test_part2_for_n_only_family():
    fam = _family_pm()
    opn1, opn2 = _fake_norm(40.0), _fake_norm(55.0, NormKind.H2K)
    r1 = region_radius_part1(opn1, fam).per_mode_radii
    r2 = region_radius_part2(opn2, fam).per_mode_radii
    assert r2[0] == pytest.approx(1 / (2 * 55.0))
    assert np.all(r2 <= r1)
    assert r2[0] / r1[0] == pytest.approx(40.0 / 55.0)


def test_part2_with_measured_norms(k30):
    op, perts, fam, region1 = k30
    opn2 = solution_operator_norm(op, NormKind.L2, NormKind.H2K)
    region2 = region_radius_part2(opn2, fam)
    assert region2.per_mode_radii[0] <= region1.per_mode_radii[0]
    assert region2.per_mode_radii[0] / region1.per_mode_radii[0] == pytest.approx(
        region1.opnorm_used.value / opn2.value
    )


def test_part2_needs_h2k_norm():
    with pytest.raises(RegionError):
        region_radius_part2(_fake_norm(10.0), _family_pm())


def test_part2_rejects_discontinuous_diffusion():
    fam = AffineFamily(model_n0(), (indicator(0.0, 1.0),), (indicator(0.0, 1.0),))
    with pytest.raises(RegionError):
        region_radius_part2(_fake_norm(10.0, NormKind.H2K), fam)


def test_part2_with_smooth_diffusion():
    bump = PiecewiseCoefficient((0.0, 1.0, 2.0), (np.array([0.0, 4.0, -4.0]), np.array([0.0])))
    fam = AffineFamily(model_n0(), (indicator(0.0, 1.0),), (bump,))
    region = region_radius_part2(_fake_norm(10.0, NormKind.H2K), fam, C_elliptic=1.0)
    # sup|a| = 1, sup|a'| = 4, so the W1,inf norm 5 dominates the n-mode norm 1
    assert region.per_mode_radii[0] == pytest.approx(1 / (2 * 10.0 * 5.0))


def test_resolvent_at_zero_both_methods_exact(k30):
    op, perts, _, _ = k30
    d = resolvent_apply(op, perts, [0.0], constant(1.0), "direct")
    n = resolvent_apply(op, perts, [0.0], constant(1.0), "neumann")
    np.testing.assert_array_equal(d.u, n.u)
    assert n.terms == 1


def test_resolvent_methods_agree_inside(k30):
    op, perts, _, region = k30
    for y in sample_polydisc(region.per_mode_radii, 10, seed=3):
        d = resolvent_apply(op, perts, y, constant(1.0), "direct")
        n = resolvent_apply(op, perts, y, constant(1.0), "neumann", tol=1e-14)
        assert np.linalg.norm(d.u - n.u) <= 1e-8 * np.linalg.norm(d.u)


def test_resolvent_flags_pole():
    k = sequence_k(5)
    op, perts, _ = model_setup(k)
    y = pencil_poles(op, perts[0], 1)[0]
    s = resolvent_apply(op, perts, [y], constant(1.0), "direct")
    assert s.near_pole


def test_neumann_diverges_beyond_pole():
    k = sequence_k(5)
    op, perts, _ = model_setup(k)
    y = pencil_poles(op, perts[0], 1)[0]
    with pytest.raises(NeumannDivergence):
        resolvent_apply(op, perts, [2.0 * y], constant(1.0), "neumann")


def test_factor_two_at_zero_is_one(k30):
    op, perts, _, region = k30
    rep = verify_factor_two(op, perts, region, points=[np.zeros(1, complex)])
    assert rep.ratios[0] == 1.0


def test_factor_two_holds_k30(k30):
    op, perts, _, region = k30
    rep = verify_factor_two(op, perts, region, samples=200, seed=42)
    assert rep.ok
    assert rep.max_ratio <= 2.0


def test_shrunk_region_ratio_near_one(k30):
    op, perts, fam, region = k30
    small = region_radius_part1(
        _fake_norm(10 * region.opnorm_used.value, k=region.k), fam
    )
    rep = verify_factor_two(op, perts, small, samples=50, seed=1)
    # first-order Neumann estimate: ratio <= 1 / (1 - 1/20)
    assert rep.max_ratio - 1 <= 1 / 19
    assert rep.max_ratio > 1


def test_sample_polydisc_deterministic_and_inside():
    radii = np.array([0.1, 2.0])
    a = sample_polydisc(radii, 20, seed=7)
    b = sample_polydisc(radii, 20, seed=7)
    for p, q in zip(a, b):
        np.testing.assert_array_equal(p, q)
        assert np.all(np.abs(p) <= radii * (1 + 1e-15))
    assert np.allclose(np.abs(a[0]), radii)


def test_cauchy_constant_function():
    op, _, _ = model_setup(20.0)
    zero = [assemble_perturbation(op.mesh, constant(0.0))]
    assert cauchy_residual(op, zero, [0.0], 0.3) <= 1e-12


def test_cauchy_inside_region(k30):
    op, perts, _, region = k30
    r = region.per_mode_radii[0]
    assert cauchy_residual(op, perts, [0.0], 0.9 * r, region=region) <= 1e-8
    assert cauchy_residual(op, perts, [0.3j * r], 0.6 * r, region=region) <= 1e-8


def test_cauchy_circle_outside_region_rejected(k30):
    op, perts, _, region = k30
    with pytest.raises(RegionError):
        cauchy_residual(op, perts, [0.0], 1.1 * region.per_mode_radii[0], region=region)


def test_cauchy_detects_pole():
    k = sequence_k(10)
    op, perts, _ = model_setup(k)
    y = pencil_poles(op, perts[0], 1)[0]
    assert cauchy_residual(op, perts, [0.0], 1.5 * abs(y)) >= 1e-2
