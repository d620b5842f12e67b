"""Bit-stable persistence.

A matrix file is ``LRMAT1\\n``, a header line ``rows cols f64 row-major`` and
``rows * cols`` little-endian float64 values.  An archive is a directory with
a JSON ``manifest`` (format version, kind, metadata, member checksums) next to
one matrix file per array.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .closed_form import FactorModel, SimilarityModel
from .data import Dataset, Fold, InteractionMatrix, Protocol
from .errors import DataError
from .nearby import HeadTailParams, NearbyModel, SparsifyParams
from .search import TunedModel
from .spectral import SpectralDecomposition

MAGIC = b"LRMAT1\n"
FORMAT_VERSION = 1


def matrix_bytes(M):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim == 1:
        M = M.reshape(-1, 1)
    if M.ndim != 2:
        raise ValueError("only vectors and matrices can be stored")
    rows, cols = M.shape
    header = f"{rows} {cols} f64 row-major\n".encode("ascii")
    return MAGIC + header + np.ascontiguousarray(M, dtype="<f8").tobytes(order="C")


def parse_matrix(buf, name="matrix"):
    if not buf.startswith(MAGIC):
        raise DataError(f"{name}: bad magic")
    end = buf.find(b"\n", len(MAGIC))
    if end < 0:
        raise DataError(f"{name}: missing header")
    try:
        rows, cols, dtype, layout = buf[len(MAGIC):end].decode("ascii").split()
        rows, cols = int(rows), int(cols)
    except ValueError:
        raise DataError(f"{name}: malformed header") from None
    if dtype != "f64" or layout != "row-major":
        raise DataError(f"{name}: unsupported dtype/layout {dtype}/{layout}")
    payload = buf[end + 1:]
    if len(payload) != rows * cols * 8:
        raise DataError(f"{name}: truncated payload ({len(payload)} of {rows * cols * 8} bytes)")
    return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(rows, cols)


def write_matrix(path, M):
    Path(path).write_bytes(matrix_bytes(M))


def read_matrix(path):
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    return parse_matrix(buf, path.name)


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def save_archive(path, kind, members, meta=None):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    listing = {}
    for name, arr in sorted(members.items()):
        arr = np.asarray(arr, dtype=np.float64)
        data = matrix_bytes(arr)
        fname = f"{name}.lrmat"
        (path / fname).write_bytes(data)
        listing[name] = {
            "file": fname,
            "sha256": hashlib.sha256(data).hexdigest(),
            "ndim": int(arr.ndim),
            "shape": list(arr.shape),
        }
    manifest = {"format_version": FORMAT_VERSION, "kind": kind, "meta": meta or {},
                "members": listing}
    text = json.dumps(manifest, indent=2, sort_keys=True, default=_json_default)
    (path / "manifest").write_text(text + "\n", encoding="utf-8")
    return path


def load_archive(path, kind=None):
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest").read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise DataError(f"cannot read archive manifest in {path}: {e}") from e
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported archive version {manifest.get('format_version')!r}")
    if kind is not None and manifest.get("kind") != kind:
        raise DataError(f"{path}: expected a {kind} archive, found {manifest.get('kind')!r}")
    arrays = {}
    for name, info in manifest["members"].items():
        try:
            buf = (path / info["file"]).read_bytes()
        except OSError as e:
            raise DataError(f"{path}: missing member {name}: {e}") from e
        if hashlib.sha256(buf).hexdigest() != info["sha256"]:
            raise DataError(f"{path}: checksum mismatch for member {name}")
        arr = parse_matrix(buf, name)
        arrays[name] = arr.ravel() if info["ndim"] == 1 else arr
    return manifest["kind"], manifest["meta"], arrays


def archive_kind(path):
    try:
        return json.loads((Path(path) / "manifest").read_text(encoding="utf-8")).get("kind")
    except (OSError, ValueError) as e:
        raise DataError(f"cannot read archive manifest in {path}: {e}") from e


# -- per-type encoders -------------------------------------------------------

def _ints(a):
    return np.asarray(a, dtype=np.int64)


def _enc_interactions(x, prefix=""):
    members = {prefix + "indptr": x.indptr, prefix + "indices": x.indices}
    meta = {"num_items": x.num_items, "user_ids": x.user_ids, "item_ids": x.item_ids}
    return members, meta


def _dec_interactions(arrays, meta, prefix=""):
    return InteractionMatrix(_ints(arrays[prefix + "indptr"]), _ints(arrays[prefix + "indices"]),
                             meta["num_items"], meta["user_ids"], meta["item_ids"])


def _enc_folds(folds, prefix):
    users = [f.user for f in folds]
    fin = [len(f.fold_in) for f in folds]
    hold = [len(f.held_out) for f in folds]
    cat = lambda xs: np.concatenate(xs) if xs else np.zeros(0)  # noqa: E731
    return {
        prefix + "users": np.array(users, dtype=np.float64),
        prefix + "fold_in_ptr": np.concatenate([[0], np.cumsum(fin)]),
        prefix + "fold_in": cat([f.fold_in for f in folds]),
        prefix + "held_ptr": np.concatenate([[0], np.cumsum(hold)]),
        prefix + "held_out": cat([f.held_out for f in folds]),
    }


def _dec_folds(arrays, prefix):
    users = _ints(arrays[prefix + "users"])
    fp, fi = _ints(arrays[prefix + "fold_in_ptr"]), _ints(arrays[prefix + "fold_in"])
    hp, hi = _ints(arrays[prefix + "held_ptr"]), _ints(arrays[prefix + "held_out"])
    return [Fold(int(u), fi[fp[r]:fp[r + 1]], hi[hp[r]:hp[r + 1]]) for r, u in enumerate(users)]


def _enc_similarity(w, prefix=""):
    members = {}
    if w.factored:
        members[prefix + "V"] = w.left
        members[prefix + "d"] = w.d
        if w.right is not None:
            members[prefix + "R"] = w.right
    else:
        members[prefix + "W"] = w.W
    if w.sigma is not None:
        members[prefix + "sigma"] = w.sigma
    meta = {"zero_diagonal": w.zero_diagonal, "provenance": w.provenance}
    return members, meta


def _dec_similarity(arrays, meta, prefix=""):
    get = lambda n: arrays.get(prefix + n)  # noqa: E731
    return SimilarityModel(W=get("W"), left=get("V"), d=get("d"), right=get("R"),
                           zero_diagonal=meta["zero_diagonal"], provenance=meta["provenance"],
                           sigma=get("sigma"))


def save(obj, path):
    """Write any persisted type to the archive directory ``path``."""
    if isinstance(obj, InteractionMatrix):
        members, meta = _enc_interactions(obj)
        return save_archive(path, "interactions", members, meta)
    if isinstance(obj, Dataset):
        members, meta = _enc_interactions(obj.train, "train.")
        members.update(_enc_folds(obj.validation_folds, "validation."))
        members.update(_enc_folds(obj.test_folds, "test."))
        meta.update(protocol=obj.protocol.value, skipped_users=obj.skipped_users)
        return save_archive(path, "dataset", members, meta)
    if isinstance(obj, SpectralDecomposition):
        return save_archive(path, "spectral", {"sigma": obj.sigma, "V": obj.V},
                            {"rank_tolerance": obj.rank_tolerance})
    if isinstance(obj, SimilarityModel):
        members, meta = _enc_similarity(obj)
        return save_archive(path, "similarity", members, meta)
    if isinstance(obj, FactorModel):
        members = {"P": obj.P, "Q": obj.Q}
        if obj.sigma is not None:
            members["sigma"] = obj.sigma
        meta = {"shrinkage": obj.shrinkage, "kind": obj.kind, "alpha": obj.alpha, "reg": obj.reg,
                "provenance": obj.provenance}
        return save_archive(path, "factor", members, meta)
    if isinstance(obj, TunedModel):
        members = {"alphas": obj.alphas, "sigma": obj.sigma, "V": obj.V,
                   "loss_trace": obj.loss_trace}
        meta = {"lambda0": obj.lambda0, "c": obj.c, "provenance": obj.provenance}
        return save_archive(path, "tuned", members, meta)
    if isinstance(obj, NearbyModel):
        members, base_meta = _enc_similarity(obj.base, "base.")
        members["loss_trace"] = obj.loss_trace
        meta = {"base": base_meta, "mode": obj.mode, "rmd": obj.rmd, "provenance": obj.provenance}
        if obj.mode == "ht":
            members["h"], members["t"] = obj.params.h, obj.params.t
        else:
            members["mask"] = obj.params.mask.astype(np.float64)
            members["s"] = obj.params.s_logits
            meta["threshold"] = obj.params.threshold
        return save_archive(path, "nearby", members, meta)
    raise TypeError(f"cannot persist {type(obj).__name__}")


def load(path, kind=None):
    """Read an archive written by :func:`save`, returning the matching object."""
    kind, meta, arrays = load_archive(path, kind)
    if kind == "interactions":
        return _dec_interactions(arrays, meta)
    if kind == "dataset":
        train = _dec_interactions(arrays, meta, "train.")
        return Dataset(train, _dec_folds(arrays, "validation."), _dec_folds(arrays, "test."),
                       Protocol(meta["protocol"]), meta["skipped_users"])
    if kind == "spectral":
        return SpectralDecomposition(arrays["sigma"], arrays["V"], meta["rank_tolerance"])
    if kind == "similarity":
        return _dec_similarity(arrays, meta)
    if kind == "factor":
        return FactorModel(arrays["P"], arrays["Q"], meta["shrinkage"], meta["kind"],
                           arrays.get("sigma"), meta["alpha"], meta["reg"], meta["provenance"])
    if kind == "tuned":
        return TunedModel(arrays["alphas"], meta["lambda0"], meta["c"], arrays["sigma"],
                          arrays["V"], arrays["loss_trace"], meta["provenance"])
    if kind == "nearby":
        base = _dec_similarity(arrays, meta["base"], "base.")
        if meta["mode"] == "ht":
            params = HeadTailParams(arrays["h"], arrays["t"])
        else:
            params = SparsifyParams(meta["threshold"], arrays["mask"] > 0, arrays["s"])
        return NearbyModel(base, meta["mode"], params, meta["rmd"], arrays["loss_trace"],
                           meta["provenance"])
    raise DataError(f"unknown archive kind {kind!r}")
