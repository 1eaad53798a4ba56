import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from changedet.data import synth_generate
from changedet.estimator import ChangeDetector
from changedet.grids import InvalidInputError
from changedet.validation import check_image_pairs, check_masks


def tiny_dataset(n=4, size=32, seed=0):
    samples = synth_generate(seed, n, size)
    a = np.stack([s.image_a for s in samples])
    b = np.stack([s.image_b for s in samples])
    y = np.stack([s.mask for s in samples])
    return (a, b), y


def tiny_estimator(**kwargs):
    params = dict(input_size=32, embed_dim=8, max_steps=6, epochs=3, batch_size=2, seed=0)
    params.update(kwargs)
    return ChangeDetector(**params)


class TestSklearnProtocol:
    def test_get_set_params_round_trip(self):
        est = tiny_estimator()
        params = est.get_params()
        assert params["input_size"] == 32
        est.set_params(lr=0.01, decoder="fp")
        assert est.lr == 0.01 and est.decoder == "fp"

    def test_clone_preserves_params(self):
        est = tiny_estimator(max_steps=11)
        assert clone(est).get_params() == est.get_params()

    def test_unfitted_predict_raises(self):
        X, _ = tiny_dataset()
        with pytest.raises(NotFittedError):
            tiny_estimator().predict(X)


class TestFitPredict:
    def test_fit_predict_score_smoke(self):
        X, y = tiny_dataset()
        est = tiny_estimator().fit(X, y)
        proba = est.predict_proba(X)
        assert proba.shape == (4, 32, 32)
        assert proba.min() >= 0.0 and proba.max() <= 1.0
        masks = est.predict(X)
        assert masks.shape == (4, 32, 32)
        assert set(np.unique(masks)) <= {0, 1}
        score = est.score(X, y)
        assert 0.0 <= score <= 1.0
        assert len(est.history_) >= 1

    def test_stacked_input_layout_accepted(self):
        (a, b), y = tiny_dataset()
        stacked = np.stack([a, b], axis=1)  # (n, 2, H, W, 3)
        est = tiny_estimator().fit(stacked, y)
        assert est.predict(stacked).shape == (4, 32, 32)

    def test_wrong_image_size_rejected(self):
        X, y = tiny_dataset(size=64)
        with pytest.raises(ValueError, match="input_size"):
            tiny_estimator().fit(X, y)


class TestValidationHelpers:
    def test_pair_shapes_enforced(self):
        with pytest.raises(InvalidInputError):
            check_image_pairs(np.zeros((2, 8, 8, 3)))
        with pytest.raises(InvalidInputError):
            check_image_pairs((np.zeros((2, 8, 8, 3)), np.zeros((2, 8, 9, 3))))

    def test_unit_floats_rescaled(self):
        a = np.full((1, 8, 8, 3), 0.5)
        b = np.zeros((1, 8, 8, 3))
        ua, ub = check_image_pairs((a, b))
        assert ua.dtype == np.uint8 and ua.max() == 128

    def test_out_of_range_rejected(self):
        bad = np.full((1, 8, 8, 3), 300.0)
        with pytest.raises(InvalidInputError):
            check_image_pairs((bad, bad))

    def test_masks_binary_checked(self):
        shape = (2, 8, 8, 3)
        with pytest.raises(InvalidInputError):
            check_masks(np.full((2, 8, 8), 7), shape)
        y255 = np.zeros((2, 8, 8))
        y255[0, 0, 0] = 255
        out = check_masks(y255, shape)
        assert out.max() == 1

    def test_mask_alignment_checked(self):
        with pytest.raises(InvalidInputError):
            check_masks(np.zeros((2, 9, 8)), (2, 8, 8, 3))
