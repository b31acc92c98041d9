import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from xensemble import synthdata as sd


def test_generation_is_deterministic_and_balanced():
    a = sd.gen_in_distribution(5, 7, 8, 0.1, seed=42)
    b = sd.gen_in_distribution(5, 7, 8, 0.1, seed=42)
    np.testing.assert_array_equal(a.images, b.images)
    assert np.bincount(a.labels).tolist() == [7] * 5
    assert a.labels[:5].tolist() == [0, 1, 2, 3, 4]


def test_zero_noise_reproduces_templates():
    ds = sd.gen_in_distribution(4, 1, 8, 0.0, seed=0)
    for k in range(4):
        np.testing.assert_array_equal(ds.images[k], sd.class_template(k, 8))


def test_class_templates_are_distinct():
    t = [sd.class_template(k, 16) for k in range(sd.MAX_CLASSES)]
    for i in range(len(t)):
        for j in range(i + 1, len(t)):
            assert not np.array_equal(t[i], t[j])


def test_ood_families_cycle_and_share_no_ids():
    ood = sd.gen_ood(16, 10, seed=1)
    assert ood.kind == sd.OUT_OF_DISTRIBUTION and ood.labels is None
    assert not set(sd.OOD_TEMPLATE_IDS) & set(sd.CLASS_TEMPLATE_IDS)
    assert len(ood) == 10 and ood.images.min() >= 0 and ood.images.max() <= 1


def test_invalid_generation_requests():
    with pytest.raises(ValueError):
        sd.gen_in_distribution(sd.MAX_CLASSES + 1, 1, 8, 0.1, 0)
    with pytest.raises(ValueError):
        sd.gen_in_distribution(3, 1, 3, 0.1, 0)
    with pytest.raises(ValueError):
        sd.gen_ood(8, 0, 0)


def test_file_round_trip_is_bit_exact(tmp_path):
    ds = sd.gen_in_distribution(3, 4, 8, 0.2, seed=5, name="test")
    sd.save_dataset(ds, tmp_path / "d.xds")
    back = sd.load_dataset(tmp_path / "d.xds")
    np.testing.assert_array_equal(back.images, ds.images)
    np.testing.assert_array_equal(back.labels, ds.labels)
    assert (back.name, back.kind, back.num_classes) == ("test", sd.IN_DISTRIBUTION, 3)
    assert sd.dumps_dataset(back) == sd.dumps_dataset(ds)


def test_ood_round_trip_keeps_missing_labels():
    ds = sd.gen_ood(8, 6, seed=2)
    back = sd.loads_dataset(sd.dumps_dataset(ds))
    assert back.labels is None and back.kind == sd.OUT_OF_DISTRIBUTION


def _blob(ds):
    return sd.dumps_dataset(ds)


def test_unsupported_version_is_its_own_error():
    raw = _blob(sd.gen_in_distribution(2, 1, 4, 0.0, 0))
    head, rest = raw.split(b"\n", 1)
    h = json.loads(head)
    h["version"] = 99
    with pytest.raises(sd.UnsupportedVersionError):
        sd.loads_dataset(json.dumps(h).encode() + b"\n" + rest)


def test_truncated_file_reports_offset():
    raw = _blob(sd.gen_in_distribution(2, 2, 4, 0.0, 0))
    cut = raw[: raw.rindex(b"\n", 0, len(raw) - 1) + 1]
    with pytest.raises(sd.DatasetFormatError) as err:
        sd.loads_dataset(cut)
    assert err.value.offset is not None


def test_corrupt_row_reports_its_offset():
    raw = _blob(sd.gen_in_distribution(2, 1, 4, 0.0, 0))
    lines = raw.split(b"\n")
    lines[2] = b"1\t!!!not-base64"
    bad = b"\n".join(lines)
    with pytest.raises(sd.DatasetFormatError) as err:
        sd.loads_dataset(bad)
    assert err.value.offset == len(lines[0]) + len(lines[1]) + 2 + 2


def test_garbage_header():
    with pytest.raises(sd.DatasetFormatError):
        sd.loads_dataset(b"not json\n")
    with pytest.raises(sd.DatasetFormatError):
        sd.loads_dataset(b'{"format": "other"}\n')


@given(st.integers(2, 6), st.integers(1, 4), st.sampled_from([4, 8]), st.floats(0, 0.5), st.integers(0, 2**32))
def test_pixels_stay_in_unit_range(k, n, side, sigma, seed):
    ds = sd.gen_in_distribution(k, n, side, sigma, seed)
    assert ds.images.min() >= 0.0 and ds.images.max() <= 1.0
    assert ds.images.shape == (k * n, side, side)
