import json

import numpy as np
import pytest

from linrec import persist
from linrec.closed_form import RegularizerSpec, SimilarityModel, fit_ease, fit_lrr, fit_mf
from linrec.data import Protocol, SplitSpec, split
from linrec.errors import DataError
from linrec.iterative import WmfConfig, fit_wmf
from linrec.nearby import tune_nearby
from linrec.search import TuneConfig, tune_lambdas
from linrec.spectral import gram_eigen


def _same(a, b):
    return a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()


def test_matrix_bytes_roundtrip():
    M = np.array([[1.0, -0.0, np.pi], [1e-300, 2.0, -7.5], [0.1, 0.2, 0.3]])
    buf = persist.matrix_bytes(M)
    assert buf.startswith(b"LRMAT1\n3 3 f64 row-major\n")
    assert len(buf) == len(b"LRMAT1\n3 3 f64 row-major\n") + 72
    assert _same(persist.parse_matrix(buf), M)


def test_matrix_errors():
    buf = persist.matrix_bytes(np.eye(2))
    with pytest.raises(DataError, match="magic"):
        persist.parse_matrix(b"XXMAT1\n" + buf[7:])
    with pytest.raises(DataError, match="truncated"):
        persist.parse_matrix(buf[:-3])
    with pytest.raises(DataError, match="dtype"):
        persist.parse_matrix(b"LRMAT1\n2 2 f32 row-major\n" + bytes(16))
    with pytest.raises(DataError, match="header"):
        persist.parse_matrix(b"LRMAT1\n2 x f64 row-major\n")


def test_matrix_file(tmp_path):
    W = np.arange(9.0).reshape(3, 3)
    persist.write_matrix(tmp_path / "w.lrmat", W)
    assert _same(persist.read_matrix(tmp_path / "w.lrmat"), W)
    with pytest.raises(DataError):
        persist.read_matrix(tmp_path / "missing.lrmat")


def test_interactions_and_dataset(tmp_path, planted):
    persist.save(planted, tmp_path / "x")
    assert persist.load(tmp_path / "x") == planted
    for proto in (Protocol.STRONG, Protocol.LOO):
        ds = split(planted, SplitSpec(proto, seed=3))
        persist.save(ds, tmp_path / proto.value)
        back = persist.load(tmp_path / proto.value, "dataset")
        assert back.protocol == ds.protocol and back.train == ds.train
        for which in ("validation", "test"):
            for a, b in zip(ds.folds(which), back.folds(which), strict=True):
                assert a.user == b.user
                assert np.array_equal(a.fold_in, b.fold_in) and np.array_equal(a.held_out, b.held_out)


def test_spectral_roundtrip(tmp_path, planted):
    spec = gram_eigen(planted)
    persist.save(spec, tmp_path / "s")
    back = persist.load(tmp_path / "s")
    assert _same(back.sigma, spec.sigma) and _same(back.V, spec.V)
    assert back.rank_tolerance == spec.rank_tolerance


def test_similarity_roundtrip_bit_identical(tmp_path, planted):
    spec = gram_eigen(planted)
    fac = fit_lrr(spec, 8, 10.0)
    persist.save(fac, tmp_path / "f")
    back = persist.load(tmp_path / "f", "similarity")
    assert back.factored
    assert _same(back.materialize(), fac.materialize())
    assert back.provenance == fac.provenance

    ease = fit_ease(planted, 5.0)
    persist.save(ease, tmp_path / "e")
    back = persist.load(tmp_path / "e")
    assert _same(back.W, ease.W) and back.zero_diagonal

    per_dim = fit_lrr(spec, 4, RegularizerSpec("per_dimension", np.array([1.0, 2.0, 3.0, 4.0])))
    persist.save(per_dim, tmp_path / "p")
    assert _same(persist.load(tmp_path / "p").materialize(), per_dim.materialize())


def test_factor_roundtrip(tmp_path, planted):
    mf = fit_mf(gram_eigen(planted), planted, 5, 1.0)
    persist.save(mf, tmp_path / "mf")
    back = persist.load(tmp_path / "mf")
    assert _same(back.P, mf.P) and _same(back.Q, mf.Q) and back.kind == "mf"
    wmf, _ = fit_wmf(planted, WmfConfig(k=4, reg=0.1, alpha=2.0, iterations=2))
    persist.save(wmf, tmp_path / "wmf")
    back = persist.load(tmp_path / "wmf")
    assert back.kind == "wmf" and back.alpha == 2.0
    X = planted.to_dense()[:5]
    assert _same(back.scores(X), wmf.scores(X))


def test_tuned_and_nearby_roundtrip(tmp_path, planted_split):
    spec = gram_eigen(planted_split.train)
    cfg = TuneConfig(lambda0=5.0, c=2.0, epochs=2, batch_size=256)
    tuned = tune_lambdas(spec, 6, planted_split.train, cfg)
    persist.save(tuned, tmp_path / "t")
    back = persist.load(tmp_path / "t")
    assert _same(back.alphas, tuned.alphas)
    assert _same(back.similarity().materialize(), tuned.similarity().materialize())

    base = fit_lrr(spec, 6, 5.0)
    for mode in ("ht", "sparse"):
        aug, _ = tune_nearby(base, mode, planted_split.train, cfg, rmd=True)
        persist.save(aug, tmp_path / mode)
        back = persist.load(tmp_path / mode, "nearby")
        assert back.mode == mode and back.rmd
        assert _same(back.similarity().materialize(), aug.similarity().materialize())


def test_corrupted_member_named(tmp_path):
    persist.save(SimilarityModel(W=np.arange(9.0).reshape(3, 3)), tmp_path / "w")
    path = tmp_path / "w" / "W.lrmat"
    raw = bytearray(path.read_bytes())
    raw[-1] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(DataError, match="checksum mismatch for member W"):
        persist.load(tmp_path / "w")


def test_truncated_member(tmp_path):
    persist.save(SimilarityModel(W=np.eye(3)), tmp_path / "w")
    path = tmp_path / "w" / "W.lrmat"
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(DataError):
        persist.load(tmp_path / "w")


def test_manifest_errors(tmp_path):
    persist.save(SimilarityModel(W=np.eye(2)), tmp_path / "w")
    man = tmp_path / "w" / "manifest"
    d = json.loads(man.read_text())
    with pytest.raises(DataError, match="expected a spectral"):
        persist.load(tmp_path / "w", "spectral")
    d["format_version"] = 99
    man.write_text(json.dumps(d))
    with pytest.raises(DataError, match="version"):
        persist.load(tmp_path / "w")
    d["format_version"] = 1
    d["kind"] = "mystery"
    man.write_text(json.dumps(d))
    with pytest.raises(DataError, match="unknown archive kind"):
        persist.load(tmp_path / "w")
    with pytest.raises(DataError):
        persist.load(tmp_path / "nothing")


def test_unsupported_object(tmp_path):
    with pytest.raises(TypeError):
        persist.save(object(), tmp_path / "o")


def test_archive_bytes_deterministic(tmp_path, planted):
    m = fit_lrr(gram_eigen(planted), 8, 10.0)
    persist.save(m, tmp_path / "a")
    persist.save(m, tmp_path / "b")
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
