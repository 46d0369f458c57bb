"""Dataset ingestion, synthetic generators, and the PGM image codec.

All features live in [0, 1] per coordinate; loaders reject out-of-range values
instead of clamping so that attack budgets stay comparable across datasets.
Generators are pure functions of their parameters and seed.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ParameterError, ParseError, ShapeError
from .nn import Array, Sample

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    features: Array                      # (n, d) float64 in [0, 1]
    labels: Array                        # (n,) int64, < class_count
    class_count: int
    provenance: str
    image_shape: tuple[int, int] | None = None
    scaling: dict | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ShapeError(f"features must be 2-D, got shape {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise ShapeError("labels length must match feature rows")
        if self.features.size:
            lo, hi = self.features.min(), self.features.max()
            if lo < 0.0 or hi > 1.0:
                raise ParameterError(f"features must lie in [0, 1], found range [{lo}, {hi}]")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ParameterError(f"labels must lie in [0, {self.class_count})")
        if self.image_shape is not None:
            h, w = self.image_shape
            if h * w != self.feature_dim:
                raise ShapeError(f"image shape {self.image_shape} does not match {self.feature_dim} features")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def sample(self, i: int) -> Sample:
        return Sample(self.features[i], int(self.labels[i]))

    def take(self, start: int, stop: int) -> "Dataset":
        return Dataset(
            self.features[start:stop],
            self.labels[start:stop],
            self.class_count,
            self.provenance,
            image_shape=self.image_shape,
            scaling=self.scaling,
        )

    def split(self, n_first: int) -> tuple["Dataset", "Dataset"]:
        """First n rows and the remainder, in order."""
        return self.take(0, n_first), self.take(n_first, len(self))


# ---------------------------------------------------------------------------
# Synthetic generators
# ---------------------------------------------------------------------------

# Fixed affine map taking the raw two-moons plane into [0, 1]^2 with margin.
_MOONS_SHIFT = np.array([1.25, 0.75])
_MOONS_SCALE = np.array([3.5, 2.5])


def moons_to_raw(features: Array) -> Array:
    """Invert the [0,1] mapping back to the canonical arc plane."""
    return np.asarray(features) * _MOONS_SCALE - _MOONS_SHIFT


def gen_moons(n: int, noise_sigma: float, seed: int) -> Dataset:
    """Two interleaved half-circle classes, mapped into the unit square."""
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    t = rng.uniform(0.0, np.pi, size=n)
    raw = np.empty((n, 2))
    outer = labels == 0
    raw[outer, 0] = np.cos(t[outer])
    raw[outer, 1] = np.sin(t[outer])
    raw[~outer, 0] = 1.0 - np.cos(t[~outer])
    raw[~outer, 1] = 0.5 - np.sin(t[~outer])
    raw += rng.normal(0.0, noise_sigma, size=(n, 2)) if noise_sigma > 0 else 0.0
    pts = np.clip((raw + _MOONS_SHIFT) / _MOONS_SCALE, 0.0, 1.0)
    return Dataset(pts, labels, 2, "synthetic:moons")


def gen_gmm(component_means, sigma: float, n: int, seed: int) -> Dataset:
    """Isotropic Gaussian blobs, one class per component, clipped to [0, 1]."""
    means = np.asarray(component_means, dtype=np.float64)
    if means.ndim != 2:
        raise ShapeError("component_means must be a (k, d) array")
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    k = means.shape[0]
    labels = np.arange(n) % k
    pts = means[labels] + rng.normal(0.0, sigma, size=(n, means.shape[1]))
    return Dataset(np.clip(pts, 0.0, 1.0), labels, k, "synthetic:gmm")


_DIGIT_GLYPHS = [
    # 8x8 glyphs for classes 0-9; '#' = ink
    ["..####..", ".#....#.", ".#....#.", ".#....#.", ".#....#.", ".#....#.", "..####..", "........"],
    ["...##...", "..###...", "...##...", "...##...", "...##...", "...##...", "..####..", "........"],
    ["..####..", ".#....#.", "......#.", ".....#..", "....#...", "..##....", ".######.", "........"],
    ["..####..", ".#....#.", "......#.", "...###..", "......#.", ".#....#.", "..####..", "........"],
    ["....##..", "...#.#..", "..#..#..", ".#...#..", ".######.", ".....#..", ".....#..", "........"],
    [".######.", ".#......", ".#####..", "......#.", "......#.", ".#....#.", "..####..", "........"],
    ["..####..", ".#......", ".#####..", ".#....#.", ".#....#.", ".#....#.", "..####..", "........"],
    [".######.", "......#.", ".....#..", "....#...", "...#....", "...#....", "...#....", "........"],
    ["..####..", ".#....#.", ".#....#.", "..####..", ".#....#.", ".#....#.", "..####..", "........"],
    ["..####..", ".#....#.", ".#....#.", "..#####.", "......#.", "......#.", "..####..", "........"],
]


def _blur3(img: Array) -> Array:
    """Light cross-shaped blur with symmetric edge padding.

    Keeps ink pixels near 1 and background near 0 (a faint halo at the edges),
    so the glyphs stay close to the binary grid the way raster digit corpora
    do; bit-depth squeezing then acts as a projection back onto the data.
    """
    p = np.pad(img, 1, mode="symmetric")
    k = np.array([[0.0, 1.0, 0.0], [1.0, 8.0, 1.0], [0.0, 1.0, 0.0]]) / 12.0
    out = np.zeros_like(img)
    h, w = img.shape
    for dy in range(3):
        for dx in range(3):
            if k[dy, dx]:
                out += k[dy, dx] * p[dy : dy + h, dx : dx + w]
    return out


def _shift(img: Array, dy: int, dx: int) -> Array:
    p = np.pad(img, 1, mode="constant")
    return p[1 - dy : 9 - dy, 1 - dx : 9 - dx]


def gen_digits8x8(n: int, seed: int) -> Dataset:
    """Blurred 8x8 template glyphs of the digits 0-9 with seeded jitter."""
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    templates = [
        _blur3(np.array([[1.0 if ch == "#" else 0.0 for ch in row] for row in glyph]))
        for glyph in _DIGIT_GLYPHS
    ]
    feats = np.empty((n, 64))
    labels = np.arange(n) % 10
    for i in range(n):
        img = templates[labels[i]]
        dy, dx = rng.integers(-1, 2, size=2)
        img = _shift(img, int(dy), int(dx))
        img = img * rng.uniform(0.85, 1.0) + rng.normal(0.0, 0.05, size=(8, 8))
        feats[i] = np.clip(img, 0.0, 1.0).ravel()
    return Dataset(feats, labels, 10, "synthetic:digits8x8", image_shape=(8, 8))


# ---------------------------------------------------------------------------
# IDX (MNIST-style) loader
# ---------------------------------------------------------------------------


def _read_exact(fh, count: int, path: str, offset: int) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise ParseError(f"{path}: truncated at offset {offset} (wanted {count} bytes, got {len(data)})")
    return data


def load_idx(images_path, labels_path) -> Dataset:
    """Load big-endian IDX image/label files; pixels scaled to [0, 1] by /255."""
    images_path, labels_path = str(images_path), str(labels_path)
    with open(images_path, "rb") as fh:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(fh, 16, images_path, 0))
        if magic != IDX_IMAGES_MAGIC:
            raise ParseError(f"{images_path}: bad magic 0x{magic:08x} at offset 0 (expected 0x{IDX_IMAGES_MAGIC:08x})")
        payload = _read_exact(fh, count * rows * cols, images_path, 16)
        if fh.read(1):
            raise ParseError(f"{images_path}: trailing bytes after offset {16 + count * rows * cols}")
    with open(labels_path, "rb") as fh:
        magic, label_count = struct.unpack(">II", _read_exact(fh, 8, labels_path, 0))
        if magic != IDX_LABELS_MAGIC:
            raise ParseError(f"{labels_path}: bad magic 0x{magic:08x} at offset 0 (expected 0x{IDX_LABELS_MAGIC:08x})")
        if label_count != count:
            raise ParseError(f"{labels_path}: label count {label_count} does not match image count {count}")
        labels = np.frombuffer(_read_exact(fh, label_count, labels_path, 8), dtype=np.uint8)
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows * cols)
    features = pixels.astype(np.float64) / 255.0
    class_count = int(labels.max()) + 1 if count else 0
    return Dataset(features, labels.astype(np.int64), class_count, "idx", image_shape=(rows, cols))


# ---------------------------------------------------------------------------
# CSV loader
# ---------------------------------------------------------------------------


def load_csv(path, label_column: str) -> Dataset:
    """Numeric CSV with a header row; features min-max scaled to [0, 1] per column.

    Constant columns scale to 0. The scaling parameters (and the original
    label values, remapped to 0..k-1) are kept on ``Dataset.scaling`` for reuse.
    """
    path = str(path)
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file")
        if label_column not in header:
            raise ConfigError(f"{path}: label column '{label_column}' not in header {header}")
        label_idx = header.index(label_column)
        raw_rows = []
        for row_no, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise ParseError(f"{path}: row {row_no}: expected {len(header)} cells, got {len(row)}")
            try:
                raw_rows.append([float(cell) for cell in row])
            except ValueError as exc:
                raise ParseError(f"{path}: row {row_no}: non-numeric cell ({exc})") from exc
    if not raw_rows:
        raise ParseError(f"{path}: no data rows")
    table = np.asarray(raw_rows, dtype=np.float64)
    raw_labels = table[:, label_idx]
    if np.any(raw_labels != np.round(raw_labels)):
        raise ParseError(f"{path}: label column '{label_column}' contains non-integer values")
    feature_cols = [i for i in range(len(header)) if i != label_idx]
    feats = table[:, feature_cols]
    col_min = feats.min(axis=0)
    col_max = feats.max(axis=0)
    span = col_max - col_min
    scaled = np.where(span > 0, (feats - col_min) / np.where(span > 0, span, 1.0), 0.0)
    label_values = sorted(set(int(v) for v in raw_labels))
    remap = {v: i for i, v in enumerate(label_values)}
    labels = np.array([remap[int(v)] for v in raw_labels], dtype=np.int64)
    scaling = {
        "columns": [header[i] for i in feature_cols],
        "min": col_min.tolist(),
        "max": col_max.tolist(),
        "label_column": label_column,
        "label_values": label_values,
    }
    return Dataset(scaled, labels, len(label_values), "csv", scaling=scaling)


# ---------------------------------------------------------------------------
# PGM (P5, 8-bit) codec
# ---------------------------------------------------------------------------


def write_pgm(image: Array, path) -> None:
    """Binary PGM, maxval 255, nearest rounding. Input values must be in [0, 1]."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ShapeError(f"image must be 2-D, got shape {image.shape}")
    if image.size and (image.min() < 0.0 or image.max() > 1.0):
        raise ParameterError("image values must lie in [0, 1]")
    h, w = image.shape
    data = np.round(image * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def _pgm_tokens(blob: bytes, path: str):
    """Yield header tokens, skipping '#' comment lines."""
    i = 0
    while True:
        while i < len(blob) and blob[i : i + 1].isspace():
            i += 1
        if i < len(blob) and blob[i : i + 1] == b"#":
            while i < len(blob) and blob[i] != 0x0A:
                i += 1
            continue
        start = i
        while i < len(blob) and not blob[i : i + 1].isspace():
            i += 1
        if start == i:
            raise ParseError(f"{path}: truncated PGM header")
        yield blob[start:i], i


def read_pgm(path) -> Array:
    path = str(path)
    with open(path, "rb") as fh:
        blob = fh.read()
    tokens = _pgm_tokens(blob, path)
    try:
        magic, _ = next(tokens)
        if magic != b"P5":
            raise ParseError(f"{path}: not a binary PGM (magic {magic!r})")
        (w_tok, _), (h_tok, _), (maxval_tok, end) = next(tokens), next(tokens), next(tokens)
        w, h, maxval = int(w_tok), int(h_tok), int(maxval_tok)
    except (StopIteration, ValueError) as exc:
        raise ParseError(f"{path}: malformed PGM header") from exc
    if maxval != 255:
        raise ParseError(f"{path}: unsupported maxval {maxval} (expected 255)")
    payload = blob[end + 1 :]
    if len(payload) != w * h:
        raise ParseError(f"{path}: payload has {len(payload)} bytes, header promises {w}x{h}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w).astype(np.float64) / 255.0
