"""File formats: grayscale image I/O with intensity windowing, dataset
manifests, and the on-disk model directory.

Image formats
  .png         8- or 16-bit grayscale PNG
  .pgm         P2/P5 PGM, maxval up to 65535 (two-byte samples big-endian)
  .raw         8-byte header (height, width as little-endian uint32) followed
               by height*width float32 little-endian, row-major

Loading maps values affinely from the [lo, hi] window to [0, 1] and clamps;
when no window is given the format's native range is used (raw files are
taken as already unit-interval). Saving inverts the same mapping.

Model directory
  model.json   format version, full config, and the shape/count layout of
               every tensor
  tensors.bin  one little-endian blob, in order: codebook centroids (f64);
               then per level (coarsest->finest): ldct-bank kernels + eigen-
               values (f64), diff-bank kernels + eigenvalues (f64), selected
               column indices (u32), per projection subset (u32) + weights
               (f64) + intercept (f64), then per tree a preorder node list
               of 4 f64 per node: (feature or -1, threshold, leaf weight,
               right-child index or -1); the left child of an internal node
               is always the next preorder entry.

All writes are atomic (temp file + rename).
"""
from __future__ import annotations

import dataclasses
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image as PilImage

from . import codebook as cb
from . import gbrt, pipeline, sfg
from .errors import (
    CorruptModelError,
    FormatError,
    IncompatibleModelError,
    InvalidConfigError,
)
from .imaging import as_image
from .saab import SaabKernels

RAW_MAGIC_LEN = 8  # two little-endian uint32 dims

_NATIVE_RANGE = {8: 255.0, 16: 65535.0}


@dataclasses.dataclass
class ManifestEntry:
    ldct_path: Path
    ndct_path: Path | None
    split: str


@dataclasses.dataclass
class Manifest:
    entries: list[ManifestEntry]
    lo: float
    hi: float

    def subset(self, split: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _window(img: np.ndarray, lo: float | None, hi: float | None, native: float) -> np.ndarray:
    lo = 0.0 if lo is None else float(lo)
    hi = native if hi is None else float(hi)
    if hi <= lo:
        raise InvalidConfigError(f"normalization window must satisfy lo < hi, got [{lo}, {hi}]")
    return np.clip((img - lo) / (hi - lo), 0.0, 1.0)


def _read_pgm(path: Path) -> tuple[np.ndarray, float]:
    data = path.read_bytes()
    if data[:2] not in (b"P2", b"P5"):
        raise FormatError(f"{path}: not a PGM file")
    binary = data[:2] == b"P5"
    # header: magic, width, height, maxval, separated by whitespace/comments
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3 and pos < len(data):
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if len(tokens) < 3:
        raise FormatError(f"{path}: truncated PGM header")
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise FormatError(f"{path}: bad PGM header") from exc
    if not 0 < maxval <= 65535:
        raise FormatError(f"{path}: unsupported PGM maxval {maxval}")
    if binary:
        pos += 1  # single whitespace after maxval
        dtype = ">u2" if maxval > 255 else "u1"
        count = width * height
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
        if arr.size != count:
            raise FormatError(f"{path}: truncated PGM payload")
    else:
        arr = np.array(data[pos:].split(), dtype=np.float64)
        if arr.size != width * height:
            raise FormatError(f"{path}: PGM sample count mismatch")
    return arr.astype(np.float64).reshape(height, width), float(maxval)


def _write_pgm(path: Path, values: np.ndarray, maxval: int = 65535) -> None:
    header = f"P5\n{values.shape[1]} {values.shape[0]}\n{maxval}\n".encode()
    dtype = ">u2" if maxval > 255 else "u1"
    _atomic_write(path, header + values.astype(dtype).tobytes())


def _read_raw(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if len(data) < RAW_MAGIC_LEN:
        raise FormatError(f"{path}: raw header too short")
    h, w = struct.unpack("<II", data[:RAW_MAGIC_LEN])
    expected = RAW_MAGIC_LEN + 4 * h * w
    if h == 0 or w == 0 or len(data) != expected:
        raise FormatError(f"{path}: raw payload is {len(data)} bytes, expected {expected}")
    arr = np.frombuffer(data, dtype="<f4", offset=RAW_MAGIC_LEN)
    return arr.astype(np.float64).reshape(h, w)


def load_image(path, lo: float | None = None, hi: float | None = None) -> np.ndarray:
    """Load a grayscale raster and window it into [0, 1]."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".raw":
        return _window(_read_raw(path), lo, hi, native=1.0)
    if suffix == ".pgm":
        values, maxval = _read_pgm(path)
        return _window(values, lo, hi, native=maxval)
    if suffix == ".png":
        try:
            with PilImage.open(path) as im:
                if im.mode not in ("L", "I", "I;16"):
                    im = im.convert("I") if im.mode.startswith("I") else im.convert("L")
                native = 255.0 if im.mode == "L" else 65535.0
                values = np.asarray(im, dtype=np.float64)
        except (OSError, SyntaxError) as exc:
            raise FormatError(f"{path}: cannot decode PNG ({exc})") from exc
        return _window(values, lo, hi, native=native)
    raise FormatError(f"{path}: unsupported image format {suffix!r}")


def save_image(path, img, lo: float | None = None, hi: float | None = None) -> None:
    """Save an image, mapping [0, 1] back onto the [lo, hi] window.

    .raw stores float32 verbatim (lossless round-trip with the default
    window); .png and .pgm store 16-bit samples.
    """
    path = Path(path)
    img = as_image(img)
    suffix = path.suffix.lower()
    if suffix == ".raw":
        header = struct.pack("<II", img.shape[0], img.shape[1])
        _atomic_write(path, header + img.astype("<f4").tobytes())
        return
    native = 65535.0
    lo = 0.0 if lo is None else float(lo)
    hi = native if hi is None else float(hi)
    if hi <= lo:
        raise InvalidConfigError(f"normalization window must satisfy lo < hi, got [{lo}, {hi}]")
    values = np.clip(np.round(img * (hi - lo) + lo), 0, native).astype(np.uint16)
    if suffix == ".pgm":
        _write_pgm(path, values, maxval=int(native))
        return
    if suffix == ".png":
        import io

        im = PilImage.fromarray(values, mode="I;16")
        buf = io.BytesIO()
        im.save(buf, format="PNG")
        _atomic_write(path, buf.getvalue())
        return
    raise FormatError(f"{path}: unsupported image format {suffix!r}")


def load_manifest(path) -> Manifest:
    """Parse a manifest JSON document; relative paths resolve against the
    manifest's own directory."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: cannot parse manifest ({exc})") from exc
    norm = doc.get("normalization")
    if not isinstance(norm, dict) or "lo" not in norm or "hi" not in norm:
        raise InvalidConfigError(f"{path}: manifest needs normalization.lo/hi")
    lo, hi = float(norm["lo"]), float(norm["hi"])
    if hi <= lo:
        raise InvalidConfigError(f"{path}: normalization window must satisfy lo < hi")
    entries = []
    base = path.parent
    for i, raw in enumerate(doc.get("entries", [])):
        if "ldct_path" not in raw:
            raise InvalidConfigError(f"{path}: entry {i} is missing ldct_path")
        split = raw.get("split", "train")
        if split not in ("train", "test"):
            raise InvalidConfigError(f"{path}: entry {i} has unknown split {split!r}")
        ndct = raw.get("ndct_path")
        entries.append(
            ManifestEntry(
                ldct_path=base / raw["ldct_path"],
                ndct_path=(base / ndct) if ndct else None,
                split=split,
            )
        )
    if not entries:
        raise InvalidConfigError(f"{path}: manifest has no entries")
    return Manifest(entries=entries, lo=lo, hi=hi)


# --- model serialization ---------------------------------------------------


def _config_to_dict(cfg: pipeline.TrainConfig) -> dict:
    d = dataclasses.asdict(cfg)
    if d["pixel_subsample"] is not None:
        d["pixel_subsample"] = list(d["pixel_subsample"])
    return d


def _config_from_dict(d: dict) -> pipeline.TrainConfig:
    d = dict(d)
    if d.get("pixel_subsample") is not None:
        d["pixel_subsample"] = tuple(d["pixel_subsample"])
    d["aux_gbrt"] = gbrt.GbrtParams(**d["aux_gbrt"])
    d["residual_gbrt"] = gbrt.GbrtParams(**d["residual_gbrt"])
    return pipeline.TrainConfig(**d)


def config_from_json(path) -> pipeline.TrainConfig:
    """Build a TrainConfig from a JSON file of (partial) TrainConfig keys."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: cannot parse config ({exc})") from exc
    base = dataclasses.asdict(pipeline.TrainConfig())
    unknown = set(doc) - set(base)
    if unknown:
        raise InvalidConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    base.update(doc)
    return _config_from_dict(base)


class _BlobWriter:
    def __init__(self):
        self.parts: list[bytes] = []

    def f64(self, arr) -> None:
        self.parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    def u32(self, arr) -> None:
        self.parts.append(np.ascontiguousarray(arr, dtype="<u4").tobytes())

    def bytes(self) -> bytes:
        return b"".join(self.parts)


class _BlobReader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def _take(self, count: int, itemsize: int, dtype: str) -> np.ndarray:
        nbytes = count * itemsize
        if self.pos + nbytes > len(self.data):
            raise CorruptModelError(
                f"tensors.bin is truncated: needed {self.pos + nbytes} bytes, have {len(self.data)}"
            )
        arr = np.frombuffer(self.data, dtype=dtype, count=count, offset=self.pos).copy()
        self.pos += nbytes
        return arr

    def f64(self, count: int) -> np.ndarray:
        return self._take(count, 8, "<f8")

    def u32(self, count: int) -> np.ndarray:
        return self._take(count, 4, "<u4")

    def done(self) -> None:
        if self.pos != len(self.data):
            raise CorruptModelError(
                f"tensors.bin has {len(self.data) - self.pos} unexpected trailing bytes"
            )


def _tree_records(tree: gbrt.Tree) -> np.ndarray:
    rec = np.zeros((tree.node_count, 4))
    rec[:, 0] = tree.feature
    rec[:, 1] = tree.threshold
    rec[:, 2] = tree.weight
    rec[:, 3] = tree.right
    return rec


def _tree_from_records(rec: np.ndarray) -> gbrt.Tree:
    n = rec.shape[0]
    feature = rec[:, 0].astype(np.int32)
    internal = feature >= 0
    left = np.where(internal, np.arange(1, n + 1, dtype=np.int32), -1)
    return gbrt.Tree(
        feature=feature,
        threshold=np.where(internal, rec[:, 1], 0.0),
        weight=np.where(internal, 0.0, rec[:, 2]),
        left=left,
        right=np.where(internal, rec[:, 3].astype(np.int32), -1),
    )


def save_model(model: pipeline.GuslModel, path) -> None:
    """Write the model directory (model.json + tensors.bin)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    blob = _BlobWriter()
    blob.f64(model.codebook.centroids)
    level_meta = []
    for lm in model.levels:
        for bank in (lm.saab_ldct, lm.saab_diff):
            blob.f64(bank.kernels)
            blob.f64(bank.eigenvalues)
        blob.u32(lm.selected)
        for proj in lm.sfg.projections:
            blob.u32(proj.subset)
            blob.f64(proj.weights)
            blob.f64([proj.intercept])
        for tree in lm.regressor.trees:
            blob.f64(_tree_records(tree))
        level_meta.append(
            {
                "level": lm.level,
                "saab_ldct": {
                    "window": lm.saab_ldct.window,
                    "channels": lm.saab_ldct.channels,
                    "degenerate": lm.saab_ldct.degenerate,
                },
                "saab_diff": {
                    "window": lm.saab_diff.window,
                    "channels": lm.saab_diff.channels,
                    "degenerate": lm.saab_diff.degenerate,
                },
                "selected": int(lm.selected.size),
                "projections": [int(p.subset.size) for p in lm.sfg.projections],
                "trees": [int(t.node_count) for t in lm.regressor.trees],
                "sfg_degenerate": lm.sfg_degenerate,
                "sfg_source_dims": lm.sfg.source_dims,
                "regressor_max_feature": lm.regressor.max_feature,
            }
        )
    doc = {
        "format_version": model.version,
        "config": _config_to_dict(model.config),
        "codebook": {"k": model.codebook.k, "patch": model.codebook.patch},
        "levels": level_meta,
    }
    _atomic_write(path / "tensors.bin", blob.bytes())
    _atomic_write(
        path / "model.json",
        (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode(),
    )


def load_model(path) -> pipeline.GuslModel:
    """Read a model directory; restore output is bit-identical to the saved
    model's."""
    path = Path(path)
    meta_path = path / "model.json"
    blob_path = path / "tensors.bin"
    if not meta_path.is_file() or not blob_path.is_file():
        raise FormatError(f"{path}: not a model directory (missing model.json/tensors.bin)")
    try:
        doc = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise CorruptModelError(f"{meta_path}: invalid JSON ({exc})") from exc
    version = doc.get("format_version")
    if version != pipeline.FORMAT_VERSION:
        raise IncompatibleModelError(
            f"model version {version!r} != supported {pipeline.FORMAT_VERSION!r}"
        )
    cfg = _config_from_dict(doc["config"])
    reader = _BlobReader(blob_path.read_bytes())
    k = int(doc["codebook"]["k"])
    patch = int(doc["codebook"]["patch"])
    centroids = reader.f64(k * patch * patch).reshape(k, patch * patch)
    levels = []
    for lvl in doc["levels"]:
        banks = []
        for key in ("saab_ldct", "saab_diff"):
            info = lvl[key]
            w = int(info["window"])
            c = int(info["channels"])
            kernels = reader.f64(c * w * w).reshape(c, w * w)
            eigenvalues = reader.f64(c)
            banks.append(
                SaabKernels(
                    window=w,
                    kernels=kernels,
                    eigenvalues=eigenvalues,
                    degenerate=bool(info["degenerate"]),
                )
            )
        selected = reader.u32(int(lvl["selected"])).astype(np.int64)
        projections = []
        for size in lvl["projections"]:
            subset = reader.u32(int(size)).astype(np.int64)
            weights = reader.f64(int(size))
            intercept = float(reader.f64(1)[0])
            projections.append(
                sfg.LntProjection(subset=subset, weights=weights, intercept=intercept)
            )
        trees = []
        for nodes in lvl["trees"]:
            rec = reader.f64(int(nodes) * 4).reshape(int(nodes), 4)
            trees.append(_tree_from_records(rec))
        regressor = gbrt.GbrtModel(
            params=cfg.residual_gbrt,
            base_score=0.0,
            trees=trees,
            max_feature=int(lvl["regressor_max_feature"]),
        )
        levels.append(
            pipeline.LevelModel(
                level=int(lvl["level"]),
                saab_ldct=banks[0],
                saab_diff=banks[1],
                selected=selected,
                sfg=sfg.SfgModel(
                    projections=projections, source_dims=int(lvl["sfg_source_dims"])
                ),
                regressor=regressor,
                sfg_degenerate=bool(lvl["sfg_degenerate"]),
            )
        )
    reader.done()
    return pipeline.GuslModel(
        config=cfg,
        codebook=cb.Codebook(centroids=centroids, patch=patch),
        levels=levels,
        version=version,
    )


# --- training diagnostics (written next to the model by the CLI) -----------


def save_diagnostics(diag: pipeline.TrainDiagnostics, path) -> None:
    doc = {
        "train_psnr": diag.train_psnr,
        "levels": [
            {
                "level": d.level,
                "raw_losses": d.raw_losses.tolist(),
                "rank_train": d.rank_train.tolist(),
                "rank_val": d.rank_val.tolist(),
                "joint_score": d.joint_score.tolist(),
                "threshold": d.threshold,
                "selected": d.selected.tolist(),
                "selected_losses": d.selected_losses.tolist(),
                "lnt_losses": d.lnt_losses.tolist(),
                "training_rows": d.training_rows,
            }
            for d in diag.levels
        ],
    }
    _atomic_write(Path(path), (json.dumps(doc, sort_keys=True) + "\n").encode())


def load_diagnostics(path) -> pipeline.TrainDiagnostics:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"{path}: no training diagnostics found")
    doc = json.loads(path.read_text())
    out = pipeline.TrainDiagnostics(train_psnr=list(doc.get("train_psnr", [])))
    for d in doc["levels"]:
        out.levels.append(
            pipeline.LevelDiagnostics(
                level=int(d["level"]),
                raw_losses=np.asarray(d["raw_losses"]),
                rank_train=np.asarray(d["rank_train"], dtype=np.int64),
                rank_val=np.asarray(d["rank_val"], dtype=np.int64),
                joint_score=np.asarray(d["joint_score"], dtype=np.int64),
                threshold=int(d["threshold"]),
                selected=np.asarray(d["selected"], dtype=np.int64),
                selected_losses=np.asarray(d["selected_losses"]),
                lnt_losses=np.asarray(d["lnt_losses"]),
                training_rows=int(d["training_rows"]),
            )
        )
    return out
