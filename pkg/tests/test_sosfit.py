from dataclasses import replace

import numpy as np
import pytest

from fits import run
from polyargmin.datasets import SampleSet, make_target, normalize_range, sample, uniform_design
from polyargmin.exact import ArgminModel
from polyargmin.polys import MVPoly, lukacs_reconstruct
from polyargmin.sosfit import (
    CertificateError,
    DomainMap,
    FitConfig,
    FitError,
    FittedModel,
    SosCertificate,
    assemble,
    count_dimensions,
    fit,
    identity_residuals,
    residual_check,
)
from polyargmin.conic import SolverSettings


def test_count_examples():
    d = count_dimensions(FitConfig(2, 1, 2), 1, 3)
    assert (d["n_free"], d["rows"], d["n_nonneg"], d["psd_blocks"], d["psd_sizes"]) == (9, 12, 3, 6, (2, 1))
    d = count_dimensions(FitConfig(2, 4, 4), 1, 200)
    assert (d["n_free"], d["rows"], d["n_nonneg"], d["psd_blocks"], d["psd_sizes"]) == (27, 1200, 200, 400, (3, 2))


@pytest.mark.parametrize("cfg,n,N", [
    (FitConfig(2, 1, 2), 1, 3),
    (FitConfig(2, 4, 4), 1, 20),
    (FitConfig(3, 3), 2, 15),
    (FitConfig(2, 2, range=None), 1, 7),
    (FitConfig(1, 2, objective_mode="per-sample"), 1, 9),
])
def test_assembled_sizes_match_counts(cfg, n, N):
    rng = np.random.default_rng(0)
    data = SampleSet(rng.uniform(-1, 1, (N, n)), rng.uniform(-1, 1, N))
    fp = assemble(cfg, data)
    d = count_dimensions(cfg, n, N)
    lay = fp.problem.layout
    assert lay.n_free == d["n_free"] and lay.n_nonneg == d["n_nonneg"]
    assert fp.problem.A.shape[0] == d["rows"]
    assert len(lay.psd_sizes) == d["psd_blocks"]


def test_certificate_identity_on_random_feasible_point():
    # any x gives b - A x equal to the identity mismatch; check against a direct expansion
    rng = np.random.default_rng(2)
    cfg = FitConfig(2, 2)
    data = SampleSet(rng.uniform(-1, 1, (4, 1)), rng.uniform(-1, 1, 4))
    fp = assemble(cfg, data)
    x = rng.standard_normal(fp.problem.layout.dim)
    r = fp.problem.b - fp.problem.A @ x
    h = [MVPoly(fp.x_basis, x[fp.h_cols[k]]) for k in range(cfg.d_y)]
    gam = MVPoly(fp.gamma_basis, x[fp.gamma_cols])
    from polyargmin import conic
    s0, s1 = fp.sizes
    for i in range(4):
        xi, yi = fp.domain.apply(data.points[i:i + 1])[0], data.targets[i]
        py = ArgminModel(tuple(h)).restrict(xi)
        o0, o1 = fp.w_offsets[i]
        W0 = conic.smat(x[o0:o0 + s0 * (s0 + 1) // 2], s0)
        W1 = conic.smat(x[o1:o1 + s1 * (s1 + 1) // 2], s1)
        t = x[fp.t_cols[i]]
        # rows: p(y) - p(y_i) + gamma_i - alpha (y - y_i)^2 - q(y) = 0, and gamma_i = t_i
        lhs = (py - py(yi)).coeffs
        lhs = np.pad(lhs, (0, 3 - len(lhs)))
        lhs[0] += gam(np.append(xi, yi))
        lhs -= cfg.alpha * np.array([yi * yi, -2 * yi, 1.0])
        lhs -= lukacs_reconstruct(W0, W1, cfg.range, cfg.D).coeffs
        R = fp.rows_per_sample
        # b - A x is the negated mismatch
        assert np.allclose(r[i * R:i * R + 3], -lhs, atol=1e-12)
        assert r[i * R + 3] == pytest.approx(-(t - gam(np.append(xi, yi))), abs=1e-12)


def test_targets_outside_range_rejected():
    with pytest.raises(ValueError):
        assemble(FitConfig(1, 1), SampleSet(np.zeros((1, 1)), np.array([1.5])))


def test_config_validation():
    with pytest.raises(ValueError):
        FitConfig(2, 0)
    with pytest.raises(ValueError):
        FitConfig(2, 3, range=None)
    with pytest.raises(ValueError):
        FitConfig(2, 1, alpha=0)
    with pytest.raises(ValueError):
        FitConfig(2, 2, range=None, objective_mode="lebesgue")


def _exact_interpolation_model(y1, alpha=0.01):
    cfg = FitConfig(0, 2, 0, alpha=alpha)
    h = (MVPoly.constant(1, -2 * alpha * y1), MVPoly.constant(1, alpha))
    return FittedModel(
        model=ArgminModel(h, cfg.range), config=cfg, domain=DomainMap.identity(1),
        gamma=MVPoly.zero(2, 0), certificates=(SosCertificate(np.zeros((2, 2)), np.zeros((1, 1)), 2),),
    )


def test_hand_built_interpolation_residual():
    data = SampleSet(np.array([[0.3]]), np.array([-1.0]))
    m = _exact_interpolation_model(-1.0)
    assert residual_check(m, data) <= 1e-10
    assert m.predict([0.3]) == pytest.approx(-1.0, abs=1e-12)


def test_single_sample_fit_interpolates():
    data = SampleSet(np.array([[0.3]]), np.array([-1.0]))
    m = fit(FitConfig(0, 2, 0), data)
    assert m.slack_values(data)[0] <= 1e-8
    assert m.predict([0.3]) == pytest.approx(-1.0, abs=1e-6)
    assert residual_check(m, data) <= 1e-6


def test_sign_data_fit():
    r = run("f1", 0, 2, 1, 200)
    assert r.model.info.status == "Optimal"
    assert r.metrics.misclassification < 0.02
    assert residual_check(r.model, r.data) <= 1e-6


def test_perturbed_certificate_detected():
    r = run("f1", 1, 2, 1, 200)
    certs = list(r.model.certificates)
    W0 = certs[5].W0.copy()
    W0[0, 0] += 1e-3
    certs[5] = SosCertificate(W0, certs[5].W1, certs[5].D)
    bad = replace(r.model, certificates=tuple(certs))
    assert residual_check(bad, r.data) >= 1e-4
    assert identity_residuals(bad, r.data)[5] >= 1e-4


def test_negative_gram_rejected():
    r = run("f1", 1, 2, 1, 200)
    certs = list(r.model.certificates)
    certs[0] = SosCertificate(certs[0].W0 - np.eye(2), certs[0].W1, certs[0].D)
    with pytest.raises(CertificateError):
        residual_check(replace(r.model, certificates=tuple(certs)), r.data)


@pytest.mark.parametrize("c", [1e-3, 0.1, 3.0, 10.0, 1e3])
def test_alpha_invariance(c):
    r = run("f3", 0, 4, 4, 200)
    s = r.model.scaled(c)
    assert residual_check(s, r.data) <= 1e-6
    pts = np.linspace(-1, 1, 100)[:, None]
    assert np.allclose(s.predict_batch(pts), r.model.predict_batch(pts), atol=1e-9)


def test_objective_modes():
    data = normalize_range(sample(make_target("f1"), uniform_design(100, 0)))
    cfgs = [FitConfig(2, 1, objective_mode="empirical"), FitConfig(2, 1, objective_mode="per-sample"),
            FitConfig(2, 1, 0, objective_mode="lebesgue")]
    for cfg in cfgs:
        mode = cfg.objective_mode
        m = fit(cfg, data)
        assert residual_check(m, data) <= 1e-6, mode
        pts = np.linspace(-1, 1, 201)[:, None]
        err = np.abs(m.predict_batch(pts) - make_target("f1")(pts))
        assert np.mean(err > 0.5) < 0.05, mode


def test_lebesgue_unbounded_reported():
    # gamma is only pinned at the data, so its integral can decrease without bound
    data = normalize_range(sample(make_target("f1"), uniform_design(100, 0)))
    with pytest.raises(FitError) as e:
        fit(FitConfig(2, 1, objective_mode="lebesgue"), data)
    assert e.value.status.value == "DualInfeasible"
    assert "empirical" in str(e.value)


def test_whole_line_fit():
    data = normalize_range(sample(make_target("f3"), uniform_design(100, 0)))
    m = fit(FitConfig(4, 4, range=None), data)
    assert m.model.range is None
    assert residual_check(m, data) <= 1e-6
    assert np.max(np.abs(m.predict_batch(data.points) - data.raw_targets())) < 0.1


def test_fit_reproducible_and_seed_recorded():
    data = normalize_range(sample(make_target("f2"), uniform_design(80, 5)))
    a, b = fit(FitConfig(3, 2), data), fit(FitConfig(3, 2), data)
    assert all(np.array_equal(p.coeffs, q.coeffs) for p, q in zip(a.model.h, b.model.h))
    assert a.seed == 5 and a.data_fingerprint == data.fingerprint()


def test_solver_failure_raises():
    data = normalize_range(sample(make_target("f1"), uniform_design(50, 0)))
    with pytest.raises(FitError) as e:
        fit(FitConfig(2, 1), data, SolverSettings(max_iter=2))
    assert e.value.status.value == "IterationLimit"


def test_custom_domain_map():
    data = normalize_range(sample(make_target("f1"), uniform_design(100, 2)))
    m = fit(FitConfig(2, 1), data, domain=DomainMap.identity(1))
    assert m.domain == DomainMap.identity(1)
    assert residual_check(m, data) <= 1e-6


def test_dimension_sweep():
    rng = np.random.default_rng(11)
    for _ in range(25):
        n = int(rng.integers(1, 4))
        cfg = FitConfig(int(rng.integers(0, 5)), int(rng.integers(1, 5)), int(rng.integers(0, 6)))
        N = int(rng.integers(1, 20))
        data = SampleSet(rng.uniform(-1, 1, (N, n)), rng.uniform(-1, 1, N))
        fp = assemble(cfg, data)
        d = count_dimensions(cfg, n, N)
        assert fp.problem.layout.n_free == d["n_free"] and fp.problem.A.shape[0] == d["rows"]
        assert len(fp.problem.layout.psd_sizes) == d["psd_blocks"]


def test_objective_nonnegative():
    data = normalize_range(sample(make_target("f2"), uniform_design(60, 3)))
    for mode in ("empirical", "per-sample"):
        assert fit(FitConfig(3, 2, objective_mode=mode), data).info.objective >= -1e-8


def test_degree_embedding_keeps_certificates():
    # zero-padding h to a higher x-degree leaves every identity intact
    r = run("f1", 2, 2, 1, 200)
    m = r.model
    h = tuple(hk.with_degree(3) for hk in m.model.h)
    padded = replace(m, model=ArgminModel(h, m.model.range, m.model.bracket),
                     config=replace(m.config, d_x=3))
    assert residual_check(padded, r.data) <= 1e-6
    pts = np.linspace(-1, 1, 50)[:, None]
    assert np.array_equal(padded.predict_batch(pts), m.predict_batch(pts))
