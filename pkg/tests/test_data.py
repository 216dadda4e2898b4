import gzip
import struct
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from fedce.data import (
    BadMagic,
    CountMismatch,
    NoisePlan,
    TooFewSamples,
    TruncatedFile,
    inject_noise,
    load_idx,
    load_mnist,
    partition_iid,
    synth_dataset,
)
from fedce.learn import EvalSet, LogRegSpec, SgdConfig, evaluate, init_params, train_local

MNIST_DIR = Path(__file__).resolve().parents[1] / "data" / "mnist"


def write_idx(path, arr, magic, compress=False):
    arr = np.asarray(arr, dtype=np.uint8)
    blob = struct.pack(">I", magic) + struct.pack(f">{arr.ndim}I", *arr.shape) + arr.tobytes()
    path.write_bytes(gzip.compress(blob) if compress else blob)


@pytest.fixture
def tiny_idx(tmp_path):
    imgs = np.zeros((3, 2, 2), np.uint8)
    imgs[0, 0, 0] = 255
    imgs[1, 1, 1] = 51
    write_idx(tmp_path / "img", imgs, 0x803)
    write_idx(tmp_path / "lab", [1, 0, 9], 0x801, compress=True)
    return tmp_path


def test_load_idx_scales_pixels(tiny_idx):
    ds = load_idx(tiny_idx / "img", tiny_idx / "lab")
    assert ds.X.shape == (3, 4)
    assert ds.X[0, 0] == 1.0 and ds.X[1, 3] == pytest.approx(0.2)
    assert ds.y.tolist() == [1, 0, 9]


def test_load_idx_errors(tiny_idx, tmp_path):
    with pytest.raises(BadMagic):
        load_idx(tiny_idx / "lab", tiny_idx / "lab")
    write_idx(tmp_path / "lab2", [1, 0], 0x801)
    with pytest.raises(CountMismatch):
        load_idx(tiny_idx / "img", tmp_path / "lab2")
    blob = (tiny_idx / "img").read_bytes()
    (tmp_path / "short").write_bytes(blob[:-3])
    with pytest.raises(TruncatedFile):
        load_idx(tmp_path / "short", tiny_idx / "lab")


@pytest.mark.skipif(not MNIST_DIR.exists(), reason="MNIST files not present")
def test_mnist_files():
    train, test = load_mnist(MNIST_DIR)
    assert train.X.shape == (60_000, 784) and test.X.shape == (10_000, 784)
    assert train.X.min() == 0.0 and train.X.max() == 1.0
    assert set(np.unique(train.y)) == set(range(10))


@pytest.mark.skipif(not MNIST_DIR.exists(), reason="MNIST files not present")
def test_mnist_shards_are_balanced():
    train, _ = load_mnist(MNIST_DIR)
    glob = np.bincount(train.y, minlength=10) / len(train)
    for shard in partition_iid(train, 4, seed=0):
        assert np.max(np.abs(np.bincount(shard.y, minlength=10) / len(shard) - glob)) < 0.05


def test_synth_is_seeded():
    a = synth_dataset(3, 5, 20, 2.0, 1)
    b = synth_dataset(3, 5, 20, 2.0, 1)
    assert a.X.tobytes() == b.X.tobytes() and a.y.tobytes() == b.y.tobytes()
    assert np.bincount(a.y).tolist() == [20, 20, 20]


def _fit_accuracy(num_classes, separation, per_class):
    full = synth_dataset(num_classes, 5, 2 * per_class, separation, 0)
    train, test = full.subset(np.arange(len(full) // 2)), full.subset(np.arange(len(full) // 2, len(full)))
    p = train_local(init_params(LogRegSpec(5, num_classes), 0), train, SgdConfig(lr=0.1, epochs=30, batch_size=32), seed=0)
    return evaluate(p, test)


def test_synth_separation_controls_difficulty():
    assert _fit_accuracy(2, 5.0, 200) > 0.95
    assert _fit_accuracy(4, 3.0, 200) > 0.9
    assert abs(_fit_accuracy(4, 0.0, 400) - 0.25) < 0.06


def test_partition_iid():
    data = EvalSet(np.arange(100.0)[:, None], np.zeros(100, int), 1)
    shards = partition_iid(data, 4, seed=3)
    assert [len(s) for s in shards] == [25] * 4
    assert sorted(np.concatenate([s.X[:, 0] for s in shards]).tolist()) == list(range(100))
    whole = partition_iid(data, 1, seed=3)[0]
    assert sorted(whole.X[:, 0].tolist()) == list(range(100))
    assert [len(s) for s in partition_iid(data.subset(np.arange(10)), 3, 0)] == [3, 3, 4]
    with pytest.raises(TooFewSamples):
        partition_iid(data.subset(np.arange(2)), 3, 0)


def test_noise_rates():
    np.testing.assert_allclose(NoisePlan(2).rates, [0, 0.5])
    np.testing.assert_allclose(NoisePlan(4).rates, [0, 0.25, 0.5, 0.75])


def test_inject_noise_counts_and_identity():
    rng = np.random.default_rng(0)
    data = EvalSet(rng.normal(size=(1001, 2)), rng.integers(0, 10, 1001), 10)
    assert inject_noise(data, 0.0, 10, 1) is data
    full = inject_noise(data, 1.0, 10, 1)
    assert np.all(full.y != data.y)
    third = inject_noise(data, 1 / 3, 10, 1)
    assert int(np.sum(third.y != data.y)) == round(1001 / 3)
    assert third.y.tobytes() == inject_noise(data, 1 / 3, 10, 1).y.tobytes()


def test_inject_noise_targets_are_uniform():
    rng = np.random.default_rng(2)
    data = EvalSet(np.zeros((10_000, 1)), rng.integers(0, 10, 10_000), 10)
    noisy = inject_noise(data, 0.5, 10, 7)
    flipped = noisy.y != data.y
    assert flipped.sum() == 5000
    shift = (noisy.y[flipped] - data.y[flipped]) % 10
    counts = np.bincount(shift, minlength=10)[1:]
    assert stats.chisquare(counts).pvalue > 0.01
