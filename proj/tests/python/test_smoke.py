"""Smoke tests for the python bindings: every exposed operation runs and a
few hand-checkable values come out right."""

import math

import numpy as np
import pytest

import leakylab as ll


@pytest.fixture
def spec():
    return ll.MixtureSpec.from_dict(
        {
            "p": 64,
            "n": 8,
            "mu": {"norm_sq": 4.0},
            "sigma_spec": {"kind": "identity"},
            "noise_law": {"kind": "gaussian"},
            "seed": 11,
        }
    )


def test_generate_deterministic(spec):
    a = ll.generate(spec)
    b = ll.generate(spec)
    assert a.X.shape == (8, 64)
    assert np.array_equal(a.X, b.X)
    assert np.array_equal(a.y, b.y)
    assert set(np.unique(a.y)) <= {-1.0, 1.0}
    # reconstruction is bit-exact
    mu = np.asarray(spec.mu)
    assert np.array_equal(a.X - np.outer(a.y, mu), a.Z)


def test_data_functionals(spec):
    f = ll.data_functionals(spec)
    assert f["trace_sigma"] == 64.0
    assert f["norm_mu_sq"] == pytest.approx(4.0)
    assert f["op_sigma"] == 1.0


def test_forward_hand_value():
    shape = ll.NetShape(2, 1, 0.5)
    W = np.array([[1.0, 0.0], [0.0, 1.0]])
    st = ll.init_network(2, shape, ll.InitScheme.fixed_matrix, 0.0, 0, W)
    x = np.array([1.0, -1.0])
    assert ll.forward(st, x) == pytest.approx(1.5 / math.sqrt(2.0))


def test_train_monitors(spec):
    d = ll.generate(spec)
    shape = ll.NetShape(4, 2, 0.5)
    st = ll.init_network(spec.p, shape, ll.InitScheme.uniform_sphere_scaled, 1e-6, 3)
    cfg = ll.TrainConfig(alpha=2e-3, sigma_init=1e-6, T=100)
    bg = ll.build_block_gram(d, 0.5, shape)
    ld = ll.min_norm_direction(d, bg)
    steps, final = ll.train(d, cfg, st, (ld.w_plus, ld.w_minus))
    assert len(steps) == 100
    assert steps[-1]["loss"] < steps[0]["loss"]
    assert all(s["loss_ratio_max"] >= 1.0 for s in steps)
    assert final.step == 100


def test_limit_direction_and_certificate(spec):
    d = ll.generate(spec)
    shape = ll.NetShape(4, 2, 0.5)
    ld = ll.min_norm_direction(d, ll.build_block_gram(d, 0.5, shape))
    if ld.sv_certificate.min() > 0:
        qp = ll.qp_oracle(d, 0.5, shape)
        a = np.concatenate([ld.w_plus, ld.w_minus])
        b = np.concatenate([qp.w_plus, qp.w_minus])
        assert np.linalg.norm(a - b) <= 1e-6 * np.linalg.norm(a)
    diag = ll.direction_diagnostics(ld, d, 64.0)
    assert diag["bracket1_pass"]


def test_regime_report(spec):
    d = ll.generate(spec)
    shape = ll.NetShape(4, 2, 0.5)
    st = ll.init_network(spec.p, shape, ll.InitScheme.uniform_sphere_scaled, 1e-6, 3)
    rep = ll.check_assumptions(d, ll.TrainConfig(alpha=1e-3, sigma_init=1e-6, T=0), st)
    assert rep["theorem1_condition"] in {"none", "i", "ii"}
    assert 0.0 <= rep["theta1"] <= 1.0
    t1, t2 = ll.measure_event_E(d)
    assert rep["theta1"] == pytest.approx(t1)


def test_kappa_and_errors(spec):
    assert ll.kappa(2.0) == pytest.approx(0.0227501319481792)
    assert ll.log_kappa(40.0) == pytest.approx(math.log(ll.kappa(40.0)), rel=1e-6)
    mu = np.asarray(spec.mu)
    err = ll.exact_gaussian_error(mu, mu, spec.sigma_spec, spec.p)
    assert err == pytest.approx(ll.kappa(2.0))
    lo, hi = ll.gaussian_bracket(mu, mu, spec.sigma_spec, spec.p)
    assert lo <= err <= hi
    mc = ll.mc_error(mu, spec, 50000, 7)
    assert abs(mc["estimate"] - err) <= 4 * mc["stderr"]
    assert ll.bayes_error(mu, spec.sigma_spec, spec.p) == pytest.approx(ll.kappa(2.0))


def test_phase_summary():
    s = ll.phase_summary(100, 1.0, 100.0, 1.0)
    assert s["regime"] == "weak"
    assert s["exponent"] == pytest.approx(0.5)


def test_equivalence_failure_probe():
    probe = ll.equivalence_failure_probe(0.8, ll.NetShape(20, 19, 0.8), 2.5, 1.0, 40, 20)
    assert probe["any_negative"]
    probe2 = ll.equivalence_failure_probe(0.8, ll.NetShape(20, 10, 0.8), 2.5, 1.0, 40, 20)
    assert not probe2["any_negative"]


def test_run_verify_smoke():
    cfg = {
        "mixture": {
            "p": 48,
            "n": 6,
            "mu": {"norm_sq": 4.0},
            "sigma_spec": {"kind": "identity"},
            "noise_law": {"kind": "gaussian"},
            "seed": 5,
        },
        "network": {"m": 4, "j_plus": 2, "gamma": 0.5},
        "train": {"alpha": 1e-3, "sigma_init": 1e-6, "T": 0,
                  "init_scheme": "uniform_sphere_scaled"},
        "trials": 1,
        "mc_samples": 10000,
    }
    out = ll.run_verify(cfg, 1)
    assert out["invariants_ok"], out["checks"]
