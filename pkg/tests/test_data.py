import hashlib

import numpy as np
import pytest

from pemm.data import (ParseError, LabeledDataset, load_cifar10_binary, load_csv, make_blobs,
                       save_csv, standardize, stratified_split, write_cifar10_binary)
from pemm.head import predict


def _fixture_bytes():
    rec = []
    for label, base in ((3, 10), (7, 200)):
        pixels = (np.arange(3072) + base) % 256
        rec.append(bytes([label]) + pixels.astype(np.uint8).tobytes())
    return b"".join(rec)


def test_cifar_fixture_parses(tmp_path):
    path = tmp_path / "batch.bin"
    path.write_bytes(_fixture_bytes())
    ds = load_cifar10_binary(path)
    np.testing.assert_array_equal(ds.labels, [3, 7])
    assert ds.features.shape == (2, 3072)
    assert ds.features[0, 0] == 10 / 255 and ds.features[1, 0] == 200 / 255
    X, y = load_cifar10_binary([path], flatten=False)
    assert X.shape == (2, 3, 32, 32)


def test_cifar_round_trip(tmp_path):
    src = tmp_path / "a.bin"
    src.write_bytes(_fixture_bytes())
    ds = load_cifar10_binary(src)
    write_cifar10_binary(tmp_path / "b.bin", ds.features, ds.labels)
    assert (tmp_path / "b.bin").read_bytes() == src.read_bytes()


def test_cifar_empty_and_truncated(tmp_path):
    empty = tmp_path / "empty.bin"
    empty.write_bytes(b"")
    assert len(load_cifar10_binary(empty)) == 0
    short = tmp_path / "short.bin"
    short.write_bytes(bytes(3072))
    with pytest.raises(ParseError) as info:
        load_cifar10_binary(short)
    assert info.value.offset == 0
    tail = tmp_path / "tail.bin"
    tail.write_bytes(_fixture_bytes() + b"\x01\x02")
    with pytest.raises(ParseError) as info:
        load_cifar10_binary(tail)
    assert info.value.offset == 2 * 3073


def test_cifar_bad_label(tmp_path):
    raw = bytearray(_fixture_bytes())
    raw[3073] = 12
    path = tmp_path / "bad.bin"
    path.write_bytes(bytes(raw))
    with pytest.raises(ParseError, match="byte offset 3073"):
        load_cifar10_binary(path)


def test_csv_load(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,b,label\n1,2,0\n3,4,1\n5,6,2\n")
    ds = load_csv(path)
    assert ds.features.shape == (3, 2) and ds.labels.shape == (3,)
    np.testing.assert_array_equal(ds.labels, [0, 1, 2])


def test_csv_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b,label\n1,2,0\n3,4,5\n")
    with pytest.raises(ParseError) as info:
        load_csv(bad, K=4)
    assert info.value.row == 3
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("a,b,label\n1,2,0\n3,1\n")
    with pytest.raises(ParseError, match="row 3"):
        load_csv(ragged)
    text = tmp_path / "text.csv"
    text.write_text("a,b,label\n1,x,0\n")
    with pytest.raises(ParseError, match="row 2"):
        load_csv(text)
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(ParseError):
        load_csv(empty)


def test_csv_round_trip(tmp_path):
    ds = make_blobs(3, 4, 5, seed=1)
    ds = ds.with_labels((ds.labels + 1) % 3)
    save_csv(ds, tmp_path / "x.csv")
    back = load_csv(tmp_path / "x.csv")
    assert back.features.tobytes() == ds.features.tobytes()
    np.testing.assert_array_equal(back.labels, ds.labels)
    np.testing.assert_array_equal(back.clean_labels, ds.clean_labels)


def test_blobs_histogram_and_determinism():
    a = make_blobs(4, 16, 500, seed=11)
    b = make_blobs(4, 16, 500, seed=11)
    assert np.all(np.bincount(a.labels) == 500)
    assert hashlib.sha256(a.features.tobytes()).hexdigest() == hashlib.sha256(b.features.tobytes()).hexdigest()
    assert make_blobs(4, 16, 500, seed=12).features.tobytes() != a.features.tobytes()


def test_blobs_zero_spread():
    ds = make_blobs(4, 8, 20, center_scale=3.0, stddev=0.0, seed=2)
    means = np.array([ds.features[ds.labels == k].mean(axis=0) for k in range(4)])
    for k in range(4):
        assert np.all(ds.features[ds.labels == k] == ds.features[ds.labels == k][0])
    assert np.mean(predict(ds.features, means) == ds.labels) == 1.0


def test_stratified_split():
    ds = make_blobs(3, 4, 10, seed=0)
    a, b = stratified_split(ds, 4, seed=1)
    assert np.all(np.bincount(a.labels) == 4) and np.all(np.bincount(b.labels) == 6)
    a2, _ = stratified_split(ds, 4, seed=1)
    assert a.features.tobytes() == a2.features.tobytes()


def test_standardize():
    tr = make_blobs(3, 5, 100, seed=0)
    tr.features[:, 2] = 7.0
    out, stats = standardize(tr)
    mu, sd = out.features.mean(axis=0), out.features.std(axis=0)
    keep = [0, 1, 3, 4]
    assert np.max(np.abs(mu[keep])) < 1e-10
    assert np.max(np.abs(sd[keep] - 1)) < 1e-10
    assert np.max(np.abs(out.features[:, 2])) < 1e-6
    te = make_blobs(3, 5, 50, seed=9)
    te_out, _ = standardize(te, stats)
    assert np.max(np.abs(te_out.features.mean(axis=0))) > 1e-3
    with pytest.raises(ValueError):
        standardize(make_blobs(3, 4, 5), stats)


def test_dataset_validates_labels():
    with pytest.raises(ValueError):
        LabeledDataset(np.zeros((2, 2)), [0, 3], 3)
