import struct

import numpy as np
import pytest

from app.data.dataset import Dataset, channel_stats, decode_dataset, encode_dataset, load_dataset, save_dataset
from app.data.synthetic import NOISE, class_template, gen_synthetic, gen_synthetic_splits
from app.errors import FormatError


def hand_built(labels=(0, 1, 1), count=None, extra=b""):
    """Three 1x2x2 examples over classes ("a", "bb")."""
    header = struct.pack("<4sIIHHHH", b"FSDS", 1, len(labels) if count is None else count, 1, 2, 2, 2)
    names = struct.pack("<H", 1) + b"a" + struct.pack("<H", 2) + b"bb"
    records = b"".join(struct.pack("<H", y) + bytes([10 * i, 10 * i + 1, 10 * i + 2, 255]) for i, y in enumerate(labels))
    return header + names + records + extra


# Codec

def test_round_trip(tmp_path, tiny_dataset):
    path = tmp_path / "train.fsds"
    save_dataset(tiny_dataset, path)
    loaded = load_dataset(path)
    assert loaded.images.tobytes() == tiny_dataset.images.tobytes()
    assert loaded.labels.tolist() == tiny_dataset.labels.tolist()
    assert loaded.class_names == tiny_dataset.class_names
    assert encode_dataset(loaded) == encode_dataset(tiny_dataset)


def test_empty_dataset_round_trip(tmp_path):
    empty = Dataset(images=np.zeros((0, 1, 8, 8), dtype=np.uint8), labels=[], class_names=("a", "b"))
    path = tmp_path / "empty.fsds"
    save_dataset(empty, path)
    loaded = load_dataset(path)
    assert len(loaded) == 0
    assert loaded.image_shape == (1, 8, 8)
    assert loaded.class_names == ("a", "b")
    assert path.stat().st_size == 20 + (2 + 1) + (2 + 1)


def test_hand_built_file():
    dataset = decode_dataset(hand_built())
    assert len(dataset) == 3
    assert dataset.image_shape == (1, 2, 2)
    assert dataset.class_names == ("a", "bb")
    assert dataset.labels.tolist() == [0, 1, 1]
    assert dataset.images[2].reshape(-1).tolist() == [20, 21, 22, 255]
    assert encode_dataset(dataset) == hand_built()


def test_header_count_larger_than_payload():
    with pytest.raises(FormatError, match="truncated payload"):
        decode_dataset(hand_built(count=4))


def test_header_count_smaller_than_payload():
    with pytest.raises(FormatError, match="trailing bytes"):
        decode_dataset(hand_built(count=2))


def test_truncated_by_one_byte():
    payload = hand_built()
    with pytest.raises(FormatError) as excinfo:
        decode_dataset(payload[:-1])
    assert excinfo.value.offset == len(payload) - 1


def test_bad_magic():
    payload = b"FSDX" + hand_built()[4:]
    with pytest.raises(FormatError, match="bad magic") as excinfo:
        decode_dataset(payload)
    assert excinfo.value.offset == 0


def test_truncated_header():
    with pytest.raises(FormatError, match="truncated header"):
        decode_dataset(b"FSDS\x01")


def test_label_out_of_range_reports_record_offset():
    with pytest.raises(FormatError, match="example 1 has label 2") as excinfo:
        decode_dataset(hand_built(labels=(0, 2, 1)))
    # 20-byte header, 7-byte name table, 6-byte records
    assert excinfo.value.offset == 20 + 7 + 6
    assert "(at byte 33)" in str(excinfo.value)


# Dataset

def test_stats_recompute(tiny_dataset):
    scaled = tiny_dataset.images.astype(np.float64) / 255.0
    np.testing.assert_allclose(tiny_dataset.mean, scaled.mean(axis=(0, 2, 3)), rtol=0, atol=1e-12)
    np.testing.assert_allclose(tiny_dataset.std, scaled.std(axis=(0, 2, 3)), rtol=0, atol=1e-12)


def test_std_floor_on_constant_channel():
    _, std = channel_stats(np.full((3, 2, 4, 4), 7, dtype=np.uint8))
    np.testing.assert_array_equal(std, [1e-3, 1e-3])


def test_dataset_rejects_bad_labels():
    with pytest.raises(FormatError):
        Dataset(images=np.zeros((2, 1, 2, 2), dtype=np.uint8), labels=[0, 3], class_names=("a", "b"))


def test_subset_keeps_class_names(tiny_dataset):
    part = tiny_dataset.subset([0, 5, 7])
    assert len(part) == 3
    assert part.class_names == tiny_dataset.class_names
    assert part.labels.tolist() == tiny_dataset.labels[[0, 5, 7]].tolist()


# Synthetic generator

def test_synthetic_is_deterministic():
    a = gen_synthetic(3, 10, 2, 8, 8, seed=5)
    b = gen_synthetic(3, 10, 2, 8, 8, seed=5)
    assert encode_dataset(a) == encode_dataset(b)
    assert encode_dataset(a) != encode_dataset(gen_synthetic(3, 10, 2, 8, 8, seed=6))


def test_synthetic_class_counts(tiny_dataset):
    assert tiny_dataset.class_counts().tolist() == [20, 20, 20, 20]
    assert tiny_dataset.image_shape == (1, 8, 8)


def test_synthetic_noise_stays_near_template():
    dataset = gen_synthetic(4, 30, 1, 16, 16, seed=3)
    for k in range(4):
        template = np.rint(class_template(k, 4, 16, 16))
        diff = dataset.images[dataset.labels == k][:, 0].astype(np.float64) - template
        assert np.abs(diff).max() <= 25


def test_templates_are_flip_invariant():
    for k in range(4):
        template = class_template(k, 4, 16, 16)
        np.testing.assert_allclose(template, template[:, ::-1], rtol=0, atol=1e-9)


def test_synthetic_rejects_empty_counts():
    with pytest.raises(ValueError):
        gen_synthetic(0, 10, 1, 8, 8, seed=0)


def test_splits_differ():
    train, test = gen_synthetic_splits(4, 10, 5, 1, 8, 8, seed=0)
    assert len(train) == 40 and len(test) == 20
    assert train.images[:20].tobytes() != test.images.tobytes()


def test_linear_classifier_separates_classes():
    train, test = gen_synthetic_splits(4, 200, 50, 1, 16, 16, seed=0)
    x_train = train.images.reshape(len(train), -1) / 255.0
    x_test = test.images.reshape(len(test), -1) / 255.0
    mu, sigma = x_train.mean(axis=0), x_train.std(axis=0) + 1e-6
    x_train, x_test = (x_train - mu) / sigma, (x_test - mu) / sigma
    onehot = np.eye(4)[train.labels]

    weights = np.zeros((x_train.shape[1], 4))
    bias = np.zeros(4)
    for _ in range(300):
        logits = x_train @ weights + bias
        logits -= logits.max(axis=1, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=1, keepdims=True)
        err = (probs - onehot) / len(x_train)
        weights -= 0.5 * (x_train.T @ err + 1e-4 * weights)
        bias -= 0.5 * err.sum(axis=0)

    accuracy = ((x_test @ weights + bias).argmax(axis=1) == test.labels).mean()
    assert accuracy >= 0.9


def test_closest_templates_overlap_under_noise():
    noise_std = np.sqrt(((2 * NOISE + 1) ** 2 - 1) / 12.0)
    templates = [class_template(k, 4, 16, 16) for k in range(4)]
    gaps = [np.linalg.norm(templates[a] - templates[b]) / noise_std
            for a in range(4) for b in range(a + 1, 4)]
    # far enough apart to learn, close enough that a few test images are confusable
    assert 4.0 < min(gaps) < 7.0
