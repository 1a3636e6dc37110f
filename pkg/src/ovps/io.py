"""File formats: NPY tensors, canonical JSON/CSV, concept sets, trees, panoptic results."""

from __future__ import annotations

import csv
import io as _io
import json
import math
from pathlib import Path
from typing import Iterable

import numpy as np
from numpy.lib import format as npy_format

from .concepts import CategoryTree, ConceptSet, build_tree, load_concept_set
from .errors import CorruptHeader, FortranOrderUnsupported, UnsupportedDtype, ValidationError
from .inference import PanopticResult

SUPPORTED_DTYPES = {np.dtype("<f4"), np.dtype("<f8"), np.dtype("<i4")}


def load_tensor(path) -> np.ndarray:
    """Read an NPY v1.0 file.

    float32 widens to float64 exactly; int32 stays int32.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        try:
            version = npy_format.read_magic(fh)
        except ValueError as exc:
            raise CorruptHeader(f"{path}: {exc}") from exc
        if version != (1, 0):
            raise CorruptHeader(f"{path}: NPY version {version} not supported, need 1.0")
        try:
            shape, fortran, dtype = npy_format.read_array_header_1_0(fh)
        except (ValueError, SyntaxError) as exc:
            raise CorruptHeader(f"{path}: {exc}") from exc
        if fortran:
            raise FortranOrderUnsupported(f"{path}: Fortran-ordered arrays are not supported")
        if dtype not in SUPPORTED_DTYPES:
            raise UnsupportedDtype(f"{path}: dtype {dtype.str} not in f4/f8/i4 little-endian")
        count = math.prod(shape)
        payload = fh.read(count * dtype.itemsize)
        if len(payload) != count * dtype.itemsize:
            raise CorruptHeader(f"{path}: truncated, expected {count * dtype.itemsize} data bytes")
    arr = np.frombuffer(payload, dtype=dtype).reshape(shape)
    if dtype.kind == "f":
        return arr.astype(np.float64)
    return arr.copy()


def store_tensor(path, tensor) -> None:
    arr = np.asarray(tensor)
    if arr.dtype.kind == "f":
        arr = arr.astype("<f8")
    elif arr.dtype.kind in "iub":
        arr = arr.astype("<i4")
    else:
        raise UnsupportedDtype(f"cannot store dtype {arr.dtype}")
    buf = _io.BytesIO()
    npy_format.write_array(buf, np.ascontiguousarray(arr), version=(1, 0))
    Path(path).write_bytes(buf.getvalue())


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return "null"
        return repr(x)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [f"{pad}{_encode(v, indent, level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_json(obj) -> str:
    """Deterministic JSON: insertion key order, floats in shortest round-trip form (at most 17 significant digits)."""
    return _encode(obj, 2, 0) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps_json(obj), encoding="utf-8")


def read_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"missing file: {path}")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_csv(path, header: Iterable[str], rows: Iterable[Iterable]) -> None:
    def cell(v):
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        return v

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([cell(v) for v in row])


def _resolve(base: Path, ref: str) -> Path:
    p = Path(ref)
    return p if p.is_absolute() else base / p


def read_concept_set(path, role: str = "predicting") -> ConceptSet:
    """Load ``{"dim", "categories": [{"name", "is_thing"}], "embedding_file"}``."""
    path = Path(path)
    doc = read_json(path)
    emb_path = _resolve(path.parent, doc["embedding_file"])
    if not emb_path.is_file():
        raise ValidationError(f"missing embedding file: {emb_path}")
    emb = load_tensor(emb_path)
    if emb.ndim != 2 or emb.shape[1] != int(doc["dim"]):
        raise ValidationError(f"{emb_path}: shape {emb.shape} does not match dim {doc['dim']}")
    cats = doc["categories"]
    return load_concept_set([c["name"] for c in cats], emb, [c["is_thing"] for c in cats], role=role)


def write_concept_set(path, concepts: ConceptSet, embedding_file: str | None = None) -> None:
    path = Path(path)
    embedding_file = embedding_file or path.stem + "_embeddings.npy"
    store_tensor(path.parent / embedding_file, concepts.embeddings)
    write_json(path, {
        "dim": concepts.dim,
        "categories": [{"name": n, "is_thing": t} for n, t in zip(concepts.names, concepts.is_thing)],
        "embedding_file": embedding_file,
    })


def read_tree(path) -> CategoryTree:
    """Load ``{"dim", "nodes": [{"id", "name", "parent"[, "synthetic"]}], "embedding_file"}``."""
    path = Path(path)
    doc = read_json(path)
    emb_path = _resolve(path.parent, doc["embedding_file"])
    if not emb_path.is_file():
        raise ValidationError(f"missing embedding file: {emb_path}")
    emb = load_tensor(emb_path)
    if emb.ndim != 2 or emb.shape[1] != int(doc["dim"]):
        raise ValidationError(f"{emb_path}: shape {emb.shape} does not match dim {doc['dim']}")
    return build_tree(doc["nodes"], emb)


def write_tree(path, tree: CategoryTree, embedding_file: str | None = None) -> None:
    path = Path(path)
    embedding_file = embedding_file or path.stem + "_embeddings.npy"
    ids = sorted(tree.nodes)
    emb = np.stack([tree.nodes[i].embedding for i in ids])
    store_tensor(path.parent / embedding_file, emb)
    nodes = []
    for i in ids:
        n = tree.nodes[i]
        rec = {"id": n.id, "name": n.name, "parent": n.parent}
        if n.synthetic:
            rec["synthetic"] = True
        nodes.append(rec)
    write_json(path, {"dim": emb.shape[1], "nodes": nodes, "embedding_file": embedding_file})


def panoptic_paths(directory, image_id: str) -> tuple[Path, Path]:
    d = Path(directory)
    return d / f"{image_id}_panoptic.npy", d / f"{image_id}_segments.json"


def write_panoptic(directory, image_id: str, result: PanopticResult) -> None:
    npy, table = panoptic_paths(directory, image_id)
    store_tensor(npy, result.segment_map.astype(np.int32))
    write_json(table, result.to_table())


def read_panoptic(directory, image_id: str) -> PanopticResult:
    npy, table = panoptic_paths(directory, image_id)
    return PanopticResult.from_table(load_tensor(npy), read_json(table))


def list_panoptic_ids(directory) -> list[str]:
    suffix = "_panoptic.npy"
    return sorted(p.name[: -len(suffix)] for p in Path(directory).glob(f"*{suffix}"))
