import numpy as np
import pytest

from calmet import binned as bd
from calmet.binning import BinningSpec
from calmet.core import top_label_view
from calmet.synth import SynthSpec, generate, map_function, true_ce


def test_true_ce_parabola_uniform():
    spec = SynthSpec(true_map=("parabola", 0.0, 0.0, 1.0))
    assert true_ce(spec) == pytest.approx(1 / 6, abs=1e-8)


def test_true_ce_grid_converges():
    spec = SynthSpec(confidence_dist=("beta", 2, 5), true_map=("temperature", 0.7))
    assert true_ce(spec, grid=10_000) == pytest.approx(true_ce(spec, grid=100_000), abs=1e-6)


def test_identity_is_calibrated():
    ds = generate(SynthSpec(n=100_000, seed=3))
    v = top_label_view(ds)
    assert bd.ece(v, BinningSpec("equal-mass", 15)).value < 0.01
    assert true_ce(SynthSpec()) == 0.0


def test_deterministic():
    a = generate(SynthSpec(n=500, seed=9, true_map=("beta-family", 1.2, 0.8, 0.1)))
    b = generate(SynthSpec(n=500, seed=9, true_map=("beta-family", 1.2, 0.8, 0.1)))
    assert np.array_equal(a.labels, b.labels) and np.array_equal(a.probs, b.probs)


def test_temperature_one_is_identity():
    c = np.linspace(0.01, 0.99, 50)
    assert np.allclose(map_function(("temperature", 1.0))(c), c, atol=1e-12)


def test_constant_map():
    ds = generate(SynthSpec(n=20_000, seed=1, true_map=("constant", 0.3)))
    assert ds.labels.mean() == pytest.approx(0.3, abs=0.02)


def test_multiclass_shape_and_bad_map():
    ds = generate(SynthSpec(n=200, seed=2, k=4))
    assert ds.probs.shape == (200, 4)
    assert np.allclose(ds.probs.sum(axis=1), 1.0)
    with pytest.raises(ValueError):
        generate(SynthSpec(n=10, k=3, true_map=("constant", 0.5)))
    with pytest.raises(ValueError):
        map_function(("temperature", 0.0))
