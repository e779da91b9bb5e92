"""Acceptance battery: the twelve headline checks, one test each.

Every test prints a single PASS/FAIL line (visible with -s; pytest -v
shows the same verdict through the test name). Tolerances are stated
inline next to each assertion.
"""

import csv
import math
import os
import time
from contextlib import contextmanager

import numpy as np
import pytest

from thinlab import bernstein as bn
from thinlab import geometry as geom
from thinlab import kernels as K
from thinlab import montecarlo as mc
from thinlab import thinness as th
from thinlab._quad import integrate, integrate_to_inf

HS2 = geom.half_space(2)
HS3 = geom.half_space(3)

ARTIFACTS = os.path.join(
    os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "artifacts")

MODELS = (bn.stable(1.0), bn.geometric_stable(1.0),
          bn.iterated_geometric(1.0, 2), bn.relativistic_stable(1.0, 1.0))


@contextmanager
def criterion(label):
    try:
        yield
    except BaseException:
        print(f"FAIL {label}", flush=True)
        raise
    print(f"PASS {label}", flush=True)


def q_factor(t, a, b):
    # 1-D killed factor peeled off the 2-D half-space kernel
    val = K.heat_kernel(HS2, t, (0.0, a), (0.0, b)).value
    return val / (4.0 * math.pi * t) ** -0.5


def cell_average_green(domain, model, x, cell, order=3):
    lo, hi = np.asarray(cell[0]), np.asarray(cell[1])
    xs, ws = np.polynomial.legendre.leggauss(order)
    axes = [0.5 * (a + b) + 0.5 * (b - a) * xs for a, b in zip(lo, hi)]
    wts = [0.5 * ws for _ in range(lo.size)]
    total = 0.0
    for i, yi in enumerate(axes[0]):
        for j, yj in enumerate(axes[1]):
            for k, yk in enumerate(axes[2]):
                g = K.green(domain, model, x, (yi, yj, yk)).value
                total += wts[0][i] * wts[1][j] * wts[2][k] * g
    return total


def test_01_power_law_verdict_grid():
    with criterion("1. power-law grid: thin iff gamma > 1, 27 runs < 60 s"):
        t0 = time.monotonic()
        for alpha in (0.5, 1.0, 1.5):
            crits = (
                th.subgraph_skbm(bn.stable(alpha)),
                th.subgraph_killed_stable(),
                # the censored test only exists for indices in (1, 2)
                th.subgraph_censored(alpha if 1.0 < alpha < 2.0 else 1.5),
            )
            for gamma in (1.0, 1.25, 2.0):
                region = geom.power_law_region(gamma, 3)
                want = "NotThin" if gamma == 1.0 else "Thin"
                for crit in crits:
                    rep = th.subgraph_test(region, crit)
                    assert rep.verdict == want, \
                        (alpha, gamma, crit.kind, rep.verdict)
        assert time.monotonic() - t0 < 60.0


def test_02_stable_threshold_scans():
    with criterion("2. log-refined thresholds at alpha 1.5: "
                   "2, 1, 2/3 each within 0.05"):
        cases = (
            (th.subgraph_censored(1.5), 2.0, 1.6, 2.4),
            (th.subgraph_killed_stable(), 1.0, 0.6, 1.4),
            (th.subgraph_skbm(bn.stable(1.5)), 2.0 / 3.0, 0.35, 1.0),
        )
        for crit, target, lo, hi in cases:
            scan = th.threshold_scan(
                lambda b: geom.log_corrected_region(b, 1, 3), lo, hi, crit)
            blo, bhi = scan.bracket
            assert target - 0.05 <= blo <= bhi <= target + 0.05, \
                (crit.kind, scan.bracket)
            if scan.inconclusive_band is not None:
                ilo, ihi = scan.inconclusive_band
                assert target - 0.05 <= ilo <= ihi <= target + 0.05


def test_03_geometric_stable_threshold_scans():
    with criterion("3. slowly varying model: level-1 threshold at 0 "
                   "(one-sided 0.05), level-2 at 1/3 within 0.05"):
        crit = th.subgraph_skbm(bn.geometric_stable(1.0))
        scan1 = th.threshold_scan(
            lambda b: geom.log_corrected_region(b, 1, 3), 0.0, 0.4, crit)
        blo, bhi = scan1.bracket
        assert 0.0 <= blo <= bhi <= 0.05, scan1.bracket
        scan2 = th.threshold_scan(
            lambda b: geom.log_corrected_region(b, 2, 3), 0.1, 0.6, crit)
        blo, bhi = scan2.bracket
        third = 1.0 / 3.0
        assert third - 0.05 <= blo <= bhi <= third + 0.05, scan2.bracket
        if scan2.inconclusive_band is not None:
            ilo, ihi = scan2.inconclusive_band
            assert third - 0.05 <= ilo <= ihi <= third + 0.05


def test_04_implication_chain_battery():
    with criterion("4. implication chain: 20-set battery, zero violations"):
        battery = []
        for gamma in (1.0, 1.1, 1.25, 1.5, 2.0, 2.5, 3.0, 4.0):
            battery.append((geom.power_law_region(gamma, 3), 1.5, None))
        for beta, level, alpha in ((0.2, 1, 1.5), (0.8, 1, 1.5),
                                   (1.2, 1, 1.5), (2.2, 1, 1.2),
                                   (0.4, 2, 1.2), (1.2, 2, 1.2)):
            battery.append((geom.log_corrected_region(beta, level, 3),
                            alpha, None))
        for gamma in (1.0, 1.1, 1.25, 1.4, 1.5, 1.75):
            cubes = th.tracking_cubes(geom.power_law_region(gamma, 2),
                                      dim=2, n_min=1, n_max=9, layers=2)
            battery.append((cubes, 1.5, 8))
        assert len(battery) == 20
        violations = 0
        for region, alpha, n_max in battery:
            kwargs = {} if n_max is None else {"n_max": n_max}
            triple = th.compare_processes(region, alpha,
                                          dim=len(region.anchor), **kwargs)
            vz, vx, vy = (triple.censored, triple.killed_stable, triple.skbm)
            # thin for the censored process forces thin for the killed
            # stable process, which forces thin for the subordinate one
            if vz == "Thin" and vx == "NotThin":
                violations += 1
            if vx == "Thin" and vy == "NotThin":
                violations += 1
        assert violations == 0


def test_05_stable_reduction_identity():
    with criterion("5. stable reduction identity: 1e-12 relative "
                   "at 1000 points, three indices"):
        rng = np.random.default_rng(7)
        r = rng.uniform(1e-4, 1.0, size=1000)
        delta = r * rng.uniform(1e-3, 1.0, size=1000)
        for alpha in (0.5, 1.0, 1.5):
            model = bn.stable(alpha)
            got = th.skbm_integrand(model, delta, r, 3)
            want = 0.5 * alpha * delta ** (2.0 - alpha) / r ** (5.0 - alpha)
            assert np.max(np.abs(got / want - 1.0)) < 1e-12


def test_06_heat_kernel_semigroup():
    with criterion("6. half-space heat kernel: semigroup residual < 1e-6 "
                   "at 20 tuples, symmetry and free-kernel domination "
                   "to 1e-14"):
        rng = np.random.default_rng(11)
        for _ in range(20):
            s, t = rng.uniform(0.2, 1.5, size=2)
            x = np.append(rng.uniform(-1.0, 1.0, 2), rng.uniform(0.2, 2.0))
            y = np.append(rng.uniform(-1.0, 1.0, 2), rng.uniform(0.2, 2.0))
            lhs = K.heat_kernel(HS3, s + t, tuple(x), tuple(y)).value
            tang = math.prod(
                (4.0 * math.pi * (s + t)) ** -0.5
                * math.exp(-(xi - yi) ** 2 / (4.0 * (s + t)))
                for xi, yi in zip(x[:2], y[:2]))

            def f(c):
                c = np.atleast_1d(c)
                return np.array([q_factor(s, x[2], ci) * q_factor(t, ci, y[2])
                                 for ci in c])

            v1, _ = integrate(f, 0.0, 12.0)
            v2, _ = integrate_to_inf(f, 12.0)
            rhs = tang * (v1 + v2)
            assert abs(lhs - rhs) / rhs < 1e-6
            rev = K.heat_kernel(HS3, s + t, tuple(y), tuple(x)).value
            assert rev == pytest.approx(lhs, rel=1e-14)
            rad = float(np.linalg.norm(x - y))
            free = float(K.free_transition_density(s + t, rad, 3))
            assert 0.0 < lhs <= free * (1.0 + 1e-14)


def test_07_green_envelope_sandwich():
    with criterion("7. Green sandwich: quadrature/shape ratio spread < 10 "
                   "over the dyadic grid; table archived"):
        model = bn.stable(1.0)
        rows = []
        for r in (0.25, 0.5, 1.0):
            for delta in (0.125, 0.25, 0.5, 1.0):
                x = (0.0, 0.0, delta)
                y = (0.0, 0.0, delta + r)
                value = K.green(HS3, model, x, y).value
                shape = K.green_shape(HS3, model, x, y)
                rows.append((r, delta, value, shape, value / shape))
        ratios = [row[4] for row in rows]
        assert max(ratios) / min(ratios) < 10.0
        os.makedirs(ARTIFACTS, exist_ok=True)
        path = os.path.join(ARTIFACTS, "green_sandwich_ratios.csv")
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(("separation", "height", "green", "shape",
                             "ratio"))
            writer.writerows(rows)


def test_08_monte_carlo_green_agreement():
    with criterion("8. Monte Carlo Green estimate within 3 standard errors "
                   "of quadrature at 1e5 paths, < 5 min"):
        model = bn.stable(1.0)
        x = (0.0, 0.0, 1.0)
        cell = mc.cell_around((0.0, 0.0, 2.0), 0.25)
        config = mc.SimConfig(step=0.04, horizon=12.0, n_paths=100_000,
                              seed=20260819)
        t0 = time.monotonic()
        estimate = mc.estimate_green_mc(HS3, model, x, cell, config,
                                        workers=os.cpu_count())
        elapsed = time.monotonic() - t0
        reference = cell_average_green(HS3, model, x, cell)
        assert abs(estimate.value - reference) <= 3.0 * estimate.std_error, \
            (estimate.value, reference, estimate.std_error)
        assert elapsed < 300.0


def test_09_exponent_shape_bounds():
    with criterion("9. exponent shape bounds: sandwich inequality at 1e4 "
                   "points, grid monotonicity, window comparability at "
                   "1e3 tuples, all four families"):
        rng = np.random.default_rng(3)
        for model in MODELS:
            # (a) phi(lam t)/phi(t) between min(1, lam) and max(1, lam)
            t = 10.0 ** rng.uniform(-6.0, 6.0, size=10_000)
            lam = 10.0 ** rng.uniform(-6.0, 6.0, size=10_000)
            ratio = bn.phi(model, lam * t) / bn.phi(model, t)
            lo = np.minimum(1.0, lam)
            hi = np.maximum(1.0, lam)
            assert np.all(ratio >= lo * (1.0 - 1e-12))
            assert np.all(ratio <= hi * (1.0 + 1e-12))
            # (b) lam^2 phi'(lam) and lam^2 phi'/phi^2 nondecreasing
            lams = np.logspace(-8.0, 8.0, 1000)
            f1 = lams ** 2 * bn.phi_prime(model, lams)
            f2 = f1 / bn.phi(model, lams) ** 2
            assert np.all(np.diff(f1) > -1e-12 * f1[:-1])
            assert np.all(np.diff(f2) > -1e-12 * f2[:-1])
            # (c) two-sided comparability across a scale window
            d, gamma = 3, 2
            lam0 = 10.0 ** rng.uniform(-4.0, 4.0, size=250)
            a = 10.0 ** rng.uniform(0.0, 1.5, size=250)
            b = 10.0 ** rng.uniform(-1.5, 0.0, size=250)
            tt = (b + rng.uniform(0.0, 1.0, size=250) * (a - b)) * lam0

            def shape(s):
                return bn.phi_prime(model, s ** -2.0) / (
                    s ** (d + gamma) * bn.phi(model, s ** -2.0) ** 2)

            base = shape(lam0)
            lo_c = b / a ** (d + gamma + 1) * base
            hi_c = a / b ** (d + gamma + 1) * base
            val = shape(tt)
            assert np.all(val >= lo_c * (1.0 - 1e-11))
            assert np.all(val <= hi_c * (1.0 + 1e-11))


def test_10_whitney_suite():
    with criterion("10. Whitney suite: sandwich bounds on every cube, "
                   "parent-maximality, exhaustive disjointness over "
                   "three generations in d = 2, 3"):
        decomps = (
            (geom.half_space(2), (0.0, 0.0), (8.0, 8.0), 6),
            (geom.half_space(3), (0.0, 0.0, 0.0), (4.0, 4.0, 4.0), 5),
            (geom.ball(2, 4.0), (-4.0, -4.0), (4.0, 4.0), 6),
            (geom.ball(3, 2.0), (-2.0, -2.0, -2.0), (2.0, 2.0, 2.0), 5),
            (geom.exterior_ball(2, 1.0), (-4.0, -4.0), (4.0, 4.0), 6),
            (geom.exterior_ball(3, 1.0), (-4.0, -4.0, -4.0),
             (4.0, 4.0, 4.0), 4),
        )
        for domain, wlo, whi, gen in decomps:
            dec = geom.whitney_decompose(domain, wlo, whi,
                                         max_generation=gen)
            assert dec.kept
            for c in dec.kept:
                assert c.diam <= c.dist * (1.0 + 1e-12)
                assert c.dist <= 4.0 * c.diam * (1.0 + 1e-12)
        halfspaces = ((2, (0.0, 0.0), (8.0, 8.0), 6),
                      (3, (0.0, 0.0, 0.0), (4.0, 4.0, 4.0), 5))
        for dim, wlo, whi, gen in halfspaces:
            dec = geom.whitney_decompose(geom.half_space(dim), wlo, whi,
                                         max_generation=gen)
            gmin = min(c.generation for c in dec.kept)
            wlo_a = np.asarray(wlo)
            whi_a = np.asarray(whi)
            for c in dec.kept:
                if c.generation == gmin:
                    continue
                side_p = 2.0 * c.side
                corner_p = np.floor(
                    np.asarray(c.corner) / side_p + 1e-9) * side_p
                in_window = (np.all(corner_p >= wlo_a - 1e-12)
                             and np.all(corner_p + side_p <= whi_a + 1e-12))
                diam_p = side_p * math.sqrt(dim)
                dist_p = corner_p[-1]
                # a kept cube's parent must itself fail the sandwich,
                # otherwise the parent would have been emitted instead
                assert not (in_window
                            and diam_p <= dist_p * (1.0 + 1e-12)), c
            gens = sorted({c.generation for c in dec.cubes})[:3]
            subset = [c for c in dec.cubes if c.generation in gens]
            corners = np.array([c.corner for c in subset])
            sides = np.array([c.side for c in subset])
            for i in range(len(subset)):
                lo_i = corners[i]
                hi_i = corners[i] + sides[i]
                overlap = np.all(
                    (corners + sides[:, None] > lo_i + 1e-12)
                    & (corners < hi_i - 1e-12), axis=1)
                overlap[i] = False
                assert not np.any(overlap)


def test_11_killing_domination_and_scaling():
    with criterion("11. killing domination at 50 heights for two models; "
                   "stable scaling ratio 2^alpha to 1e-6"):
        heights = np.geomspace(0.2, 5.0, 50)
        for model in (bn.stable(1.0), bn.geometric_stable(1.0)):
            scaling = model.kind == "stable"
            for delta in heights:
                x = (0.0, 0.0, float(delta))
                kx = K.kappa_X(HS3, model, x).value
                kd = K.killing_density(HS3, model, x,
                                       use_scaling=scaling).value
                assert 0.0 < kx <= kd * (1.0 + 1e-6), (model.kind, delta)
        for alpha in (0.5, 1.0, 1.5):
            model = bn.stable(alpha)
            for delta in (0.25, 0.7, 1.3):
                k1 = K.killing_density(HS3, model, (0.0, 0.0, delta),
                                       use_scaling=False).value
                k2 = K.killing_density(HS3, model, (0.0, 0.0, 2.0 * delta),
                                       use_scaling=False).value
                assert k1 / k2 == pytest.approx(2.0 ** alpha, rel=1e-6)


def test_12_classifier_soundness():
    with criterion("12. classifier soundness: 50 synthetic sequences "
                   "classified correctly"):
        ns = np.arange(2, 38)
        cases = []
        for rho in np.linspace(0.30, 0.94, 17):
            cases.append((ns * math.log(rho), "Thin"))
        for rho in np.linspace(1.06, 2.50, 17):
            cases.append((ns * math.log(rho), "NotThin"))
        for p, want in ((0.5, "NotThin"), (1.0, "NotThin"),
                        (1.5, "Thin"), (2.0, "Thin")):
            for scale in (-2.0, 0.0, 3.0):
                cases.append((-p * np.log(ns) + scale, want))
        for q, want in ((0.5, "NotThin"), (1.0, "NotThin"), (1.5, "Thin")):
            cases.append((-np.log(ns) - q * np.log(np.log(ns)), want))
        cases.append((-np.log(ns) - 1.5 * np.log(np.log(ns)) + 2.0, "Thin"))
        assert len(cases) == 50
        wrong = [(i, want) for i, (logs, want) in enumerate(cases)
                 if th.classify_log_terms(logs, 2)[0] != want]
        assert not wrong, wrong
