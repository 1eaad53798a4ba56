import numpy as np
import pytest
from PIL import Image

from changedet.checkpoint import build_model
from changedet.data import synth_generate
from changedet.grids import InvalidInputError
from changedet.inference import evaluate_samples, mask_contour, predict_files
from changedet.metrics import METRIC_KEYS, binarize


@pytest.fixture
def model(micro_config):
    m = build_model(micro_config)
    m.eval()
    return m


def test_evaluate_samples_record_keys(model, micro_config):
    samples = synth_generate(2, 3, micro_config.input_size)
    metrics, counts = evaluate_samples(model, samples, 0.5, 2)
    assert tuple(metrics.keys()) == METRIC_KEYS
    assert counts.total == 3 * micro_config.input_size ** 2


def test_macro_averaging_option(model, micro_config):
    samples = synth_generate(2, 3, micro_config.input_size)
    micro, counts_micro = evaluate_samples(model, samples, 0.5, 2)
    macro, counts_macro = evaluate_samples(model, samples, 0.5, 2, macro=True)
    assert tuple(macro.keys()) == METRIC_KEYS
    assert counts_micro == counts_macro
    assert all(0.0 <= macro[k] <= 1.0 for k in METRIC_KEYS)


def test_empty_sample_set_rejected(model):
    with pytest.raises(InvalidInputError):
        evaluate_samples(model, [], 0.5, 2)


def test_mask_contour_outlines():
    mask = np.zeros((6, 6), dtype=np.uint8)
    mask[1:5, 1:5] = 1
    contour = mask_contour(mask)
    assert contour[1, 1] and contour[1, 4]
    assert not contour[2, 2]  # interior stays clear
    assert not contour[0, 0]  # background stays clear


class TestPredictFiles:
    def _write_pair(self, tmp_path, size=32, seed=4):
        pair = synth_generate(seed, 1, size)[0]
        pa = tmp_path / "a.png"
        pb = tmp_path / "b.png"
        Image.fromarray(pair.image_a).save(pa)
        Image.fromarray(pair.image_b).save(pb)
        return pa, pb

    def test_writes_three_consistent_rasters(self, model, tmp_path):
        pa, pb = self._write_pair(tmp_path)
        paths = predict_files(model, pa, pb, tmp_path / "out")
        assert set(paths) == {"probability", "mask", "overlay"}
        mask = np.asarray(Image.open(paths["mask"]))
        assert set(np.unique(mask)) <= {0, 255}
        prob = np.asarray(Image.open(paths["probability"]), dtype=np.float64) / 65535.0
        assert np.array_equal(binarize(prob, 0.5) * 255, mask)
        overlay = np.asarray(Image.open(paths["overlay"]))
        assert overlay.shape == (32, 32, 3)

    def test_idempotent_bytes(self, model, tmp_path):
        pa, pb = self._write_pair(tmp_path)
        paths1 = predict_files(model, pa, pb, tmp_path / "out")
        first = {k: p.read_bytes() for k, p in paths1.items()}
        paths2 = predict_files(model, pa, pb, tmp_path / "out")
        assert {k: p.read_bytes() for k, p in paths2.items()} == first

    def test_mismatched_inputs_rejected(self, model, tmp_path):
        pa, _ = self._write_pair(tmp_path, size=32)
        other = tmp_path / "other"
        other.mkdir()
        _, pb = self._write_pair(other, size=64, seed=5)
        with pytest.raises(InvalidInputError):
            predict_files(model, pa, pb, tmp_path / "out")
