import json

import numpy as np
import pytest

import afreeqc as aq


def random_field(n, m, N, seed):
    rng = np.random.default_rng(seed)
    axes = np.meshgrid(*[(np.arange(N) + 0.5) / N - 0.5] * n, indexing="ij")
    u = np.zeros((N,) * n + (m,))
    for _ in range(8):
        k = rng.integers(-3, 4, size=n)
        if not k.any():
            k[0] = 1
        phase = sum(2 * np.pi * k[a] * axes[a] for a in range(n)) + rng.uniform(0, 2 * np.pi)
        u += np.cos(phase)[..., None] * rng.normal(size=m)
    return u


def test_catalog_ranks():
    expected = {"div": 1, "curl2d": 1, "curl3d": 2, "cauchy_riemann": 2, "hessian_curl": 2}
    assert set(expected) <= set(aq.operators())
    for name, r in expected.items():
        rep = aq.rank_check(name)
        assert rep["rank"] == r
        assert rep["constant_rank"]


def test_symbol_and_errors():
    s = aq.symbol("div", [0.6, 0.8])
    assert s.shape == (1, 2)
    assert np.allclose(s, [[0.6, 0.8]])
    with pytest.raises(ValueError):
        aq.symbol("div", [1.0, 1.0])
    with pytest.raises(ValueError):
        aq.rank_check("nope")


def test_projection_is_afree_and_idempotent():
    u = random_field(2, 2, 32, 1)
    tu, rep = aq.project("div", u)
    assert tu.shape == u.shape
    assert rep["residual_afree"] < 1e-12
    assert rep["idempotence_gap"] < 1e-12
    assert aq.hminus1_norm("div", tu) < 1e-12
    ttu, _ = aq.project("div", tu)
    assert np.allclose(ttu, tu, atol=1e-13)
    cr, _ = aq.project("cauchy_riemann", u)
    assert not cr.any()


def test_functional():
    u = np.zeros((16, 16, 2))
    u[..., 0] = 1.0
    assert aq.functional("norm_p", u) == pytest.approx(1.0)
    assert aq.functional("neg_norm_p", u) == pytest.approx(-1.0)


def test_testers():
    cert, witness = aq.test_aqc("div", "neg_norm_p", grid=16)
    assert cert["status"] == "violation"
    assert witness is not None and witness.shape == (16, 16, 2)
    strong, _ = aq.test_strong_aqcb("cauchy_riemann", grid=32)
    periodic, _ = aq.test_aqcb("cauchy_riemann", grid=32)
    assert strong["status"] == "violation"
    assert periodic["status"] == "none_found"


def test_cr_sequence_small():
    rep = aq.cr_sequence(k_max=8, grid=64)
    rows = rep["table"]
    assert [r["k"] for r in rows] == [1, 2, 4, 8]
    for r in rows:
        assert r["norm_lp"] == pytest.approx(1.0, abs=1e-6)
        assert r["I"] == pytest.approx(-1.0, abs=1e-6)
    assert max(map(abs, rows[-1]["pairings"])) < max(map(abs, rows[0]["pairings"]))


def test_run_config():
    code, summary, files = aq.run({"command": "rank-check", "op": "curl3d"})
    assert code == 0 and files == []
    assert json.loads(summary)["rank"] == 2
    with pytest.raises(ValueError):
        aq.run({"command": "rank-check", "colour": 1})
