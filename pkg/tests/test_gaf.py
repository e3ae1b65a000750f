import math

import numpy as np
import pytest
from scipy.special import gammaln, logsumexp

from mdlab import gaf
from mdlab.errors import ValidationMismatch, WindowOverflow, WindowTooLarge
from mdlab.experiments import gaf_ensemble, make_functions
from mdlab.config import UNIT_BUMP, VARIANCE_PAIR
from mdlab.rng import SeededStream
from mdlab.testfunctions import Bump, default_pair

from oracles import KAPPA, variance_oracle

S = SeededStream(77, 7)

# Li2 oracle (tests/oracles.py), unit bump at r = 4, step 1/16; step 1/32 moves it by 1e-6 relative
VAR_UNIT_R4 = 0.06541177849550915


def cov_se(a, b):
    p = a * b.conj()
    n = p.size
    return p.mean(), p.real.std() / math.sqrt(n), p.imag.std() / math.sqrt(n)


# -------------------------------------------------------------- sampling --

@pytest.mark.parametrize("R", [1.0, 4.0, 9.5, 17.0])
def test_truncation_rule(R):
    N = gaf.truncation_degree(R)
    k = np.arange(0, 4 * N + 200)
    logw = 2 * k * math.log(R) - gammaln(k + 1.0)
    tail = lambda n: math.exp(logsumexp(logw[n + 1:]) - R * R)
    assert tail(N) <= gaf.TAIL_TOL
    assert tail(N - 1) > gaf.TAIL_TOL


def test_value_at_origin_is_first_coefficient():
    g = gaf.sample_gaf(3.0, S)
    assert g(0j) == g.zeta[0]


def test_truncation_error_at_window_edge():
    g = gaf.sample_gaf(6.0, S.child(1))
    full = np.concatenate([g.zeta, SeededStream(1, 1).generator().standard_normal(20) * (1 + 0j)])
    g2 = gaf.GafSample(full, g.window_radius, g.trunc_radius)
    z = g.window_radius * np.exp(2j * np.pi * np.arange(64) / 64)
    diff = np.abs(g(z) - g2(z)).max()
    assert diff < 10 * g.eps_tr * math.exp(g.window_radius ** 2 / 2)


def test_evaluation_against_direct_series():
    g = gaf.sample_gaf(2.0, S.child(2))
    z = np.array([0.3 + 0.1j, -1.2j, 1.9 + 0.4j])
    direct = np.polyval(g.coefficients()[::-1], z)
    assert np.allclose(g(z), direct, rtol=1e-12)
    assert np.allclose(g.log_abs(z), np.log(np.abs(direct)), rtol=1e-12)


def test_covariance_at_one_and_i():
    z1, z2 = 1 + 0j, 1j
    vals = np.array([gaf.sample_gaf(1.5, S.child(3, i), N=40)(np.array([z1, z2])) for i in range(4000)])
    m, se_re, se_im = cov_se(vals[:, 0], vals[:, 1])
    want = np.exp(z1 * np.conj(z2))
    assert abs(m.real - want.real) < 5 * se_re
    assert abs(m.imag - want.imag) < 5 * se_im


def test_window_guards():
    with pytest.raises(WindowTooLarge):
        gaf.sample_gaf(16.5, S)
    with pytest.raises(ValueError):
        gaf.sample_gaf(0.0, S)


def test_no_overflow_at_largest_window():
    g = gaf.sample_gaf(16.0, S.child(4))
    assert np.all(np.isfinite(g.b)) and np.isfinite(g.log_abs(16.0 + 0j))


# ----------------------------------------------------------------- zeros --

def test_constructed_root_recovered():
    # coefficients of (z - a) q(z) with q random, rewritten in the zeta parametrisation
    a = 0.5
    q = SeededStream(5, 5).generator().standard_normal(40) / np.exp(0.5 * gammaln(np.arange(40) + 1.0))
    c = np.zeros(41)
    c[1:] += q
    c[:-1] -= a * q
    zeta = c * np.exp(0.5 * gammaln(np.arange(41) + 1.0))
    g = gaf.GafSample(zeta, 3.0, 4.0)
    zs = gaf.find_zeros(g)
    assert np.abs(zs.zeros - a).min() < 1e-8


def hausdorff(a, b):
    d = np.abs(a[:, None] - b[None, :])
    return max(d.min(axis=1).max(), d.min(axis=0).max())


def test_companion_matches_aberth():
    worst = 0.0
    for i in range(50):
        g = gaf.sample_gaf(4.0, S.child(6, i))
        assert g.N <= 512
        zs = gaf.find_zeros(g)
        comp = gaf.companion_roots(g)
        # a small margin keeps roots straddling the window edge out of the comparison
        inner = zs.zeros[np.abs(zs.zeros) <= 3.9]
        comp = comp[np.abs(comp) <= 4.0]
        if inner.size:
            worst = max(worst, np.abs(inner[:, None] - comp[None, :]).min(axis=1).max())
    assert worst < 1e-6


def test_companion_guard():
    g = gaf.sample_gaf(16.0, S)
    if g.N > 512:
        with pytest.raises(ValueError):
            gaf.companion_roots(g)


@pytest.mark.parametrize("R", [2.0, 6.0, 12.0])
def test_count_equals_winding_number(R):
    for i in range(3):
        g = gaf.sample_gaf(R, S.child(7, i))
        zs = gaf.find_zeros(g)
        count, nodes = gaf.winding_number(g, zs.contour_radius)
        assert count == int(np.count_nonzero(np.abs(zs.zeros) < zs.contour_radius)) or zs.contour_radius > R
        assert len(zs) == zs.validation_count
        assert np.all(zs.polish_residuals <= gaf.POLISH_TOL)
        assert 512 <= nodes


def test_winding_number_of_monomial():
    # z^5 shifted into the zeta parametrisation winds five times around any circle
    zeta = np.zeros(8, complex)
    zeta[5] = math.sqrt(math.factorial(5))
    g = gaf.GafSample(zeta, 2.0, 3.0)
    assert gaf.winding_number(g, 1.0)[0] == 5


def test_window_larger_than_truncation_rejected():
    g = gaf.sample_gaf(2.0, S)
    with pytest.raises(ValueError):
        gaf.find_zeros(g, 5.0)


def test_perturbed_contour_when_a_root_sits_on_it():
    # a root exactly on |z| = 2 forces the perturbed radius
    a = 2.0
    q = SeededStream(8, 8).generator().standard_normal(30) / np.exp(0.5 * gammaln(np.arange(30) + 1.0))
    c = np.zeros(31)
    c[1:] += q
    c[:-1] -= a * q
    g = gaf.GafSample(c * np.exp(0.5 * gammaln(np.arange(31) + 1.0)), 2.0, 3.0)
    zs = gaf.find_zeros(g)
    assert zs.contour_radius != 2.0
    assert len(zs) == zs.validation_count


def test_mean_count_disk_of_radius_three():
    _, counts, _, _, excl, _ = gaf_ensemble(3.0, 300, UNIT_BUMP, 21, 1)
    se = counts.std(ddof=1) / math.sqrt(counts.size)
    assert abs(counts.mean() - 9.0) < 3 * se
    assert excl == 0


# ------------------------------------------------------------ statistics --

def test_linear_statistic_examples():
    h = Bump()
    assert gaf.linear_statistic(np.array([], complex), h, 2.0, 10.0) == (0.0, -4.0 / math.pi * h.integral)
    z = np.array([0.5 + 0j, 1j, 5.0 + 0j])
    moved = np.array([0.5 + 0j, 1j, 7.0 - 3.0j])
    assert gaf.linear_statistic(z, h, 2.0, 10.0) == gaf.linear_statistic(moved, h, 2.0, 10.0)
    with pytest.raises(WindowOverflow):
        gaf.linear_statistic(z, h, 5.0, 5.5)


def test_centred_statistic_has_zero_mean():
    hs = make_functions(VARIANCE_PAIR)
    _, _, _, stats, _, _ = gaf_ensemble(4.0, 300, VARIANCE_PAIR, 22, 1)
    for j in range(len(hs)):
        x = stats[:, j]
        assert abs(x.mean()) < 3 * x.std(ddof=1) / math.sqrt(x.size)


def test_variance_against_li2_oracle():
    h = make_functions(UNIT_BUMP)[0]
    assert variance_oracle(h, 4.0) == pytest.approx(VAR_UNIT_R4, rel=1e-9)
    _, _, _, stats, _, _ = gaf_ensemble(4.0, 600, UNIT_BUMP, 23, 1)
    v = stats[:, 0].var(ddof=1)
    assert abs(v - VAR_UNIT_R4) < 4 * v * math.sqrt(2 / stats.shape[0])


def test_li2_oracle_approaches_kappa_limit():
    h = Bump()
    prev = 0.0
    for r in (4.0, 8.0, 12.0):
        ratio = r * r * variance_oracle(h, r) / (KAPPA * h.l2_laplacian)
        assert prev < ratio < 1.0
        prev = ratio
    assert prev > 0.95


def test_log_field_mean_and_rotation():
    t = np.exp(0.5j * np.pi * np.arange(4))
    vals = np.array([gaf.log_field(gaf.sample_gaf(1.0, S.child(9, i), N=29), t) for i in range(8000)])
    want = -0.5 * gaf.EULER_GAMMA
    se = vals.std(axis=0) / math.sqrt(vals.shape[0])
    assert np.all(np.abs(vals.mean(axis=0) - want) < 5 * se)
    # ln|xi| of a standard complex normal has variance pi^2/24
    assert vals.var() == pytest.approx(math.pi ** 2 / 24, rel=0.05)


def test_log_field_alpha_shift_and_guard():
    g = gaf.sample_gaf(2.0, S)
    t = 0.3 + 0.2j
    assert gaf.log_field(g, t, alpha=0.5) == pytest.approx(0.5 * gaf.log_field(g, t) + 0.25 * gaf.EULER_GAMMA)
    with pytest.raises(ValueError):
        gaf.log_field(g, 10.0)
    zeta = np.zeros(4, complex)
    zeta[1] = 1.0
    assert math.isnan(gaf.log_field(gaf.GafSample(zeta, 1.0, 2.0), 0j))


def test_green_identity_per_sample():
    h = Bump()
    for i in range(3):
        g = gaf.sample_gaf(5.0, S.child(10, i))
        zs = gaf.find_zeros(g)
        _, cen = gaf.linear_statistic(zs, h, 4.0)
        q1, q2, err, excl = gaf.green_statistic(g, h, 4.0)
        assert abs(q1 - cen) <= err
        assert excl == 0


# --------------------------------------------------------- test functions --

@pytest.mark.parametrize("h", [Bump(), Bump(4, 0.25 + 0.5j, 0.7), *default_pair(), *make_functions(VARIANCE_PAIR)])
def test_bump_constants(h):
    q = h.radial_quadrature()
    assert q["integral"] == pytest.approx(h.integral, rel=1e-10)
    assert q["l2_laplacian"] == pytest.approx(h.l2_laplacian, rel=1e-10)
    assert abs(q["integral_laplacian"]) < 1e-6


def test_bump_vanishes_to_second_order_on_boundary():
    h = Bump(3, 0.2 - 0.1j, 0.8)
    th = np.linspace(0, 2 * np.pi, 50)
    rim = h.center + h.scale * np.exp(1j * th)
    d = 1e-4
    assert np.abs(h(rim)).max() < 1e-8
    grad = np.abs(h(rim + d * np.exp(1j * th)) - h(rim - d * np.exp(1j * th))) / (2 * d)
    assert grad.max() < 1e-6
    assert np.abs(h.laplacian(rim)).max() < 1e-8
    inner = h.center + (h.scale - d) * np.exp(1j * th)
    # the Laplacian vanishes linearly in the distance to the rim
    assert np.abs(h.laplacian(inner)).max() < 100 * d


def test_bump_rejects_rough_exponent():
    with pytest.raises(ValueError):
        Bump(2)
    with pytest.raises(ValueError):
        Bump(3, 0j, -1.0)


def test_dilation():
    h = Bump(3, 0.5 + 0j, 0.5)
    z = np.array([0.9 + 0.1j, 1.2 - 0.3j])
    assert np.allclose(h.dilate(2.0)(z), h(z / 2.0))
    assert h.dilate(2.0).l2_laplacian == pytest.approx(h.l2_laplacian / 4)


def test_default_pair_norm_ratio():
    h1, h2 = default_pair()
    assert h1.l2_laplacian / h2.l2_laplacian == pytest.approx(9 / 16)
