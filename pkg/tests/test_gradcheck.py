import numpy as np
import pytest

from macbig import gradcheck as G
from macbig import layers as L


def test_quadratic_exact():
    w = np.array([1.0, 2.0])
    rep = G.grad_check(lambda p: (float(np.sum(p**2)), 2 * p), w, tol=1e-6)
    assert rep.passed and rep.max_rel_error < 1e-6


def test_detects_wrong_gradient():
    w = np.array([1.0, -2.0, 0.5])
    rep = G.grad_check(lambda p: (float(np.sum(p**3)), 3 * p), w)
    assert not rep.passed and rep.max_rel_error > 0.1


@pytest.mark.parametrize("seed", [0, 1])
def test_layer_suite_float32(seed):
    bad = [str(r) for r in G.layer_checks(seed) if not r.passed]
    assert not bad, bad


def test_end_to_end_float64_strict():
    reports = G.end_to_end_checks(0, tol=1e-5, max_entries=15, dtype=np.float64)
    assert all(r.passed for r in reports), [str(r) for r in reports if not r.passed]


def test_layer_suite_catches_perturbed_backward(monkeypatch):
    orig = L.attention_backward

    def broken(dctx, cache, layer, dweights=None):
        dx, g = orig(dctx, cache, layer, dweights)
        g["ctx"] = g["ctx"] * 1.01
        return dx, g

    monkeypatch.setattr(L, "attention_backward", broken)
    failed = {r.name for r in G.layer_checks(0) if not r.passed}
    assert failed == {"attention.ctx"}
