from __future__ import annotations

import numpy as np
import pytest

from src.errors import FormatError
from src.imaging.grid import ImageGrid
from src.transform.vline import Sinogram
from src.utils.formats import (
    IMAGE_TAG,
    load_image,
    load_sinogram,
    read_csv,
    read_pgm,
    read_raw,
    save_image,
    save_sinogram,
    write_pgm,
    write_raw,
)
from src.utils.results_store import ResultsStore


@pytest.fixture
def image(rng):
    return ImageGrid(rng.standard_normal((17, 17)))


def test_raw_header_and_round_trip(tmp_path, image):
    paths = save_image(image, tmp_path, "phantom", ["f32"])
    with open(paths["f32"], "rb") as fh:
        assert fh.readline() == b"VLT-IMG 17 17\n"

    loaded = load_image(paths["f32"])
    np.testing.assert_allclose(loaded.values, image.values.astype(np.float32))


def test_sinogram_tag_is_checked(tmp_path, rng):
    g = Sinogram(rng.standard_normal((20, 11)))
    path = save_sinogram(g, tmp_path, "sinogram", ["f32"])["f32"]
    assert load_sinogram(path).values.shape == (20, 11)
    with pytest.raises(FormatError):
        load_image(path)


def test_truncated_payload_is_rejected(tmp_path):
    path = tmp_path / "bad.f32"
    write_raw(path, np.ones((4, 4)), IMAGE_TAG)
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(FormatError):
        read_raw(path)

    other = tmp_path / "other.f32"
    other.write_bytes(b"HELLO 2 2\n" + bytes(16))
    with pytest.raises(FormatError):
        read_raw(other)


def test_pgm_rescales_to_full_range(tmp_path, image):
    path = save_image(image, tmp_path, "phantom", ["pgm"])["pgm"]
    pixels = read_pgm(path)
    assert pixels.shape == (17, 17)
    assert pixels.min() == 0 and pixels.max() == 65535
    assert np.unravel_index(pixels.argmax(), pixels.shape) == np.unravel_index(
        image.values.argmax(), image.values.shape
    )


def test_pgm_of_constant_image_is_black(tmp_path):
    path = tmp_path / "flat.pgm"
    write_pgm(path, np.full((5, 5), 3.0))
    assert not np.any(read_pgm(path))


def test_csv_has_one_row_per_lattice_row(tmp_path, image):
    path = save_image(image, tmp_path, "phantom", ["csv"])["csv"]
    values = read_csv(path)
    assert values.shape == (17, 17)
    np.testing.assert_allclose(values, image.values, rtol=1e-9)


def test_unknown_format_is_rejected(tmp_path, image):
    with pytest.raises(FormatError):
        save_image(image, tmp_path, "phantom", ["tiff"])


def test_results_store_collections(tmp_path):
    store = ResultsStore(tmp_path, deterministic=True)
    store.push_record("summary", {"method": "TV", "final_E2": 0.1})
    store.push_record("summary", {"method": "L2", "final_E2": 0.3})
    written = store.flush()

    frame = store.frame("summary")
    assert list(frame["method"]) == ["TV", "L2"]
    assert "timestamp" not in frame.columns
    assert written["summary"].read_text().splitlines()[0] == "method,final_E2"

    stamped = ResultsStore(tmp_path, deterministic=False)
    assert "timestamp" in stamped.push_record("summary", {"method": "TV"})
