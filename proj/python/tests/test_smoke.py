import json

import numpy as np
import pytest

import pyhoft


def test_single_reflection():
    u = np.zeros((4, 1))
    u[0, 0] = np.sqrt(2.0)
    q = pyhoft.exact_q(pyhoft.build_factors(u, "exact"))
    np.testing.assert_allclose(q, np.diag([-1.0, 1.0, 1.0, 1.0]), atol=1e-15)


def test_exact_q_matches_numpy_reflections():
    u = pyhoft.gaussian(3, 32, 6)
    expected = np.eye(32)
    for i in range(6):
        col = u[:, i : i + 1]
        expected = expected @ (np.eye(32) - 2.0 * col @ col.T / float(col[:, 0] @ col[:, 0]))
    q = pyhoft.exact_q(pyhoft.build_factors(u, "exact"))
    np.testing.assert_allclose(q, expected, atol=1e-12)
    assert pyhoft.orthogonality_error(q) < 1e-12


def test_apply_matches_materialized():
    f = pyhoft.build_factors(pyhoft.gaussian(5, 64, 8))
    x = pyhoft.gaussian(6, 64, 3)
    np.testing.assert_allclose(pyhoft.apply_q(f, x), pyhoft.approx_q(f) @ x, atol=1e-11)
    assert pyhoft.factored_orthogonality_error(f) == pytest.approx(
        pyhoft.orthogonality_error(pyhoft.approx_q(f)), rel=1e-9
    )


def test_identity_init_and_json_round_trip():
    w0 = pyhoft.gaussian(1, 12, 10)
    x = pyhoft.gaussian(2, 10, 4)
    for kind in ("hoft", "shoft", "lora", "oft"):
        a = pyhoft.init_adapter(kind, 12, 10, 2, seed=9)
        assert a.kind == kind
        np.testing.assert_allclose(a.forward(w0, x), w0 @ x, atol=1e-12)
        text = a.to_json()
        assert json.loads(text)
        b = pyhoft.adapter_from_json(text)
        assert b.to_json() == text


def test_nf4_round_trip():
    levels = pyhoft.nf4_levels()
    assert len(levels) == 16 and levels[0] == -1.0 and levels[-1] == 1.0
    w = pyhoft.gaussian(7, 64, 64)
    q = pyhoft.quantize(w, double_quant=True)
    assert q.double_quantized and len(q.codes) == 64 * 64
    assert max(q.codes) <= 15
    assert 0.05 < pyhoft.relative_rms_error(w, q) < 0.15
    assert pyhoft.dequantize(q).shape == (64, 64)


def test_bad_input_raises():
    with pytest.raises(ValueError):
        pyhoft.init_adapter("bogus", 4, 4, 2)
    with pytest.raises(ValueError):
        pyhoft.orthogonality_error(np.zeros((2, 3)))


def test_short_training_decreases_loss():
    losses, adapter = pyhoft.train("hoft", "rotation", 16, 12, 4, 2, steps=2000)
    assert adapter.kind == "hoft"
    assert losses[-1] < 1e-3 * losses[0]
