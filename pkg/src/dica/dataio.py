"""MNIST IDX ingestion, model persistence and PGM output."""
import gzip
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .graph import DicaModel, Evidence

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
FORMAT_VERSION = 1
NUM_CLASSES = 10


def _read_bytes(path):
    path = Path(path)
    data = path.read_bytes()
    if path.suffix == ".gz":
        data = gzip.decompress(data)
    return data


def _parse_idx(data, magic, ndims):
    header = 4 + 4 * ndims
    if len(data) < 4:
        raise FormatError("file too short for an IDX magic number", offset=len(data))
    (found,) = struct.unpack_from(">I", data, 0)
    if found != magic:
        raise FormatError(f"bad IDX magic 0x{found:08x}, expected 0x{magic:08x}", offset=0)
    if len(data) < header:
        raise FormatError("truncated IDX header", offset=len(data))
    dims = struct.unpack_from(f">{ndims}I", data, 4)
    expected = header + int(np.prod(dims, dtype=np.int64))
    if len(data) < expected:
        raise FormatError(f"truncated IDX payload: expected {expected} bytes, got {len(data)}",
                          offset=len(data))
    if len(data) > expected:
        raise FormatError("trailing bytes after IDX payload", offset=expected)
    return np.frombuffer(data, dtype=np.uint8, offset=header).reshape(dims)


def load_idx_images(path):
    """Grayscale images from an IDX3 file (optionally gzipped), shape (T, rows, cols)."""
    return _parse_idx(_read_bytes(path), IDX_IMAGES_MAGIC, 3)


def load_idx_labels(path):
    labels = _parse_idx(_read_bytes(path), IDX_LABELS_MAGIC, 1)
    bad = np.flatnonzero(labels >= NUM_CLASSES)
    if bad.size:
        raise FormatError(f"label {labels[bad[0]]} outside 0..9", offset=8 + int(bad[0]))
    return labels


def write_idx_images(images, path):
    images = np.asarray(images, dtype=np.uint8)
    _write(path, struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape) + images.tobytes())


def write_idx_labels(labels, path):
    labels = np.asarray(labels, dtype=np.uint8)
    _write(path, struct.pack(">II", IDX_LABELS_MAGIC, len(labels)) + labels.tobytes())


def _write(path, data):
    path = Path(path)
    if path.suffix == ".gz":
        data = gzip.compress(data, mtime=0)
    path.write_bytes(data)


def binarize(image, threshold=128):
    """Map grayscale bytes to symbols: 1 where ``pixel >= threshold``."""
    return (np.asarray(image) >= threshold).astype(np.uint8)


@dataclass
class LabeledDataset:
    """Binary images ``(T, height, width)`` with optional class labels."""

    images: np.ndarray
    labels: np.ndarray = None

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.uint8)
        if self.images.ndim != 3:
            raise ValueError(f"images must have shape (T, height, width), got {self.images.shape}")
        if np.any(self.images > 1):
            raise ValueError("images must be binary")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if len(self.labels) != len(self.images):
                raise FormatError(f"{len(self.labels)} labels for {len(self.images)} images")

    def __len__(self):
        return len(self.images)

    @property
    def height(self):
        return self.images.shape[1]

    @property
    def width(self):
        return self.images.shape[2]

    def pixels(self):
        """Flattened row-major pixel symbols, shape (T, height * width)."""
        return self.images.reshape(len(self), -1)

    def evidence(self, with_labels=False):
        """One all-hard :class:`Evidence` per image."""
        if with_labels and self.labels is None:
            raise ValueError("dataset has no labels")
        labels = self.labels if with_labels else [None] * len(self)
        return [Evidence.hard(x, None if c is None else int(c)) for x, c in zip(self.pixels(), labels)]


def load_mnist(images_path, labels_path=None, threshold=128):
    images = binarize(load_idx_images(images_path), threshold)
    labels = None
    if labels_path is not None:
        labels = load_idx_labels(labels_path)
        if len(labels) != len(images):
            raise FormatError(f"{len(labels)} labels for {len(images)} images")
    return LabeledDataset(images, labels)


def take_subset(dataset, count, seed=0):
    """Seeded uniform sample of ``count`` items without replacement."""
    if count > len(dataset):
        raise ValueError(f"cannot take {count} items from a dataset of {len(dataset)}")
    idx = np.random.default_rng(seed).choice(len(dataset), size=count, replace=False)
    labels = None if dataset.labels is None else dataset.labels[idx]
    return LabeledDataset(dataset.images[idx], labels)


def split_subset(dataset, count, seed=0):
    """Like :func:`take_subset` but also return the items left out."""
    order = np.random.default_rng(seed).permutation(len(dataset))
    parts = []
    for idx in (order[:count], order[count:]):
        labels = None if dataset.labels is None else dataset.labels[idx]
        parts.append(LabeledDataset(dataset.images[idx], labels))
    return tuple(parts)


def _fmt(x):
    return format(float(x), ".17g")


def _vector(v):
    return "[" + ", ".join(_fmt(x) for x in v) + "]"


def _matrix(P, indent):
    pad = " " * indent
    rows = (",\n" + pad + "  ").join(_vector(r) for r in P)
    return "[\n" + pad + "  " + rows + "\n" + pad + "]"


def dumps_model(model):
    """Canonical JSON text for a model; floats carry 17 significant digits."""
    parts = [
        f'  "format_version": {FORMAT_VERSION}',
        f'  "M": {model.M}',
        f'  "source_sizes": {json.dumps(list(model.source_sizes))}',
        f'  "visible_sizes": {json.dumps(list(model.visible_sizes))}',
        '  "priors": [\n' + ",\n".join("    " + _vector(p) for p in model.priors) + "\n  ]",
        '  "visible_cpts": [\n' + ",\n".join("    " + _matrix(P, 4) for P in model.visible_cpts) + "\n  ]",
    ]
    if model.has_label:
        parts.append(f'  "label_size": {model.label_size}')
        parts.append('  "label_cpt": ' + _matrix(model.label_cpt, 2))
    return "{\n" + ",\n".join(parts) + "\n}\n"


def save_model(model, path):
    Path(path).write_text(dumps_model(model))


def loads_model(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"model file is not valid JSON: {e.msg}", offset=e.pos) from e
    if doc.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported model format version {doc.get('format_version')!r}")
    try:
        source_sizes = tuple(doc["source_sizes"])
        if doc["M"] != len(source_sizes):
            raise FormatError("M does not match source_sizes")
        label_cpt = doc.get("label_cpt")
        if label_cpt is not None and len(label_cpt[0]) != doc.get("label_size"):
            raise FormatError("label_size does not match label_cpt")
        return DicaModel(
            source_sizes,
            tuple(doc["visible_sizes"]),
            tuple(np.array(p, dtype=np.float64) for p in doc["priors"]),
            tuple(np.array(P, dtype=np.float64) for P in doc["visible_cpts"]),
            None if label_cpt is None else np.array(label_cpt, dtype=np.float64),
        )
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise FormatError(f"invalid model document: {e}") from e


def load_model(path):
    return loads_model(Path(path).read_text())


def pgm_bytes(values, width, height):
    """Binary PGM (P5, maxval 255); pixel = round-half-up(255 * value)."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size != width * height:
        raise ValueError(f"{v.size} values for a {width}x{height} image")
    if np.any(v < 0) or np.any(v > 1):
        raise ValueError("pixel values must lie in [0, 1]")
    pixels = np.floor(255.0 * v + 0.5).astype(np.uint8)
    return f"P5\n{width} {height}\n255\n".encode("ascii") + pixels.tobytes()


def write_pgm(values, width, height, path):
    Path(path).write_bytes(pgm_bytes(values, width, height))
