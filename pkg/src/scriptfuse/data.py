"""Corpus ingestion, resizing, deterministic splitting and batch iteration.

A corpus is a directory with one subdirectory per script class holding
8-bit grayscale or color raster images (``.png``, ``.pgm``, ``.jpg``).  A
``manifest.csv`` of ``relative_path,class_name`` lines (no header)
overrides directory discovery when present.  Class order is always
lexicographic so label indices are stable across runs.

Split records are replayable: ``relative_path,class_name,train|test``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path, PurePosixPath

import numpy as np
from PIL import Image, UnidentifiedImageError

from .fsio import atomic_write_text
from .wavelet import wavelet_preprocess

#: The eleven scripts of the word-image corpus this pipeline was built for,
#: in canonical (lexicographic) order.
CANONICAL_SCRIPTS = (
    "Bangla", "Devanagari", "Gujarati", "Gurumukhi", "Kannada", "Malayalam",
    "Oriya", "Roman", "Tamil", "Telugu", "Urdu",
)

NUM_CLASSES = 11
IMAGE_SUFFIXES = (".png", ".pgm", ".jpg")

#: Valid (domain, input size) combinations for prepared network inputs.
INPUT_COMBOS = (("s", 32), ("s", 48), ("s", 128), ("f", 32), ("f", 48))

_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class DatasetManifest:
    """Labeled corpus: (relative path, class name) pairs plus class order."""

    root: Path
    entries: tuple[tuple[str, str], ...]
    class_names: tuple[str, ...]

    def __post_init__(self):
        if len(self.class_names) != NUM_CLASSES:
            raise ValueError(
                f"expected exactly {NUM_CLASSES} classes, got "
                f"{len(self.class_names)}: {list(self.class_names)}")
        if list(self.class_names) != sorted(set(self.class_names)):
            raise ValueError("class names must be distinct and sorted")
        known = set(self.class_names)
        for rel, cls in self.entries:
            if cls not in known:
                raise ValueError(f"entry {rel!r} has unknown class {cls!r}")

    def label_index(self, class_name: str) -> int:
        return self.class_names.index(class_name)


@dataclass
class DatasetSplit:
    """Disjoint train/test partition of a manifest."""

    train: tuple[tuple[str, str], ...]
    test: tuple[tuple[str, str], ...]
    class_names: tuple[str, ...]
    ratio: float
    seed: int | None


@dataclass
class Batch:
    images: list
    labels: list

    @property
    def size(self) -> int:
        return len(self.images)


def load_image(path) -> np.ndarray:
    """Decode a raster file to a 2D luminance array in [0, 1].

    Color inputs are reduced with weights 0.299/0.587/0.114.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"image not found: {path}")
    try:
        with Image.open(path) as img:
            if img.mode == "L":
                return np.asarray(img, dtype=np.float64) / 255.0
            if img.mode in ("I", "I;16"):
                arr = np.asarray(img, dtype=np.float64)
                return arr / 65535.0
            rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
    except UnidentifiedImageError as exc:
        raise ValueError(f"cannot decode image {path}: {exc}") from exc
    return (rgb @ _LUMA) / 255.0


def resize_bilinear(image: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Bilinear resampling on a corner-aligned grid; plain stretch, no
    aspect-ratio preservation."""
    h, w = target
    if image.ndim != 2 or image.shape[0] < 1 or image.shape[1] < 1:
        raise ValueError(f"resize_bilinear expects a non-empty 2D image, got "
                         f"shape {tuple(image.shape)}")
    if h < 1 or w < 1:
        raise ValueError(f"target size must be positive, got {target}")
    src_h, src_w = image.shape

    def grid(n_out, n_in):
        if n_out == 1:
            return np.zeros(1)
        return np.arange(n_out) * ((n_in - 1) / (n_out - 1))

    rows = grid(h, src_h)
    cols = grid(w, src_w)
    r0 = np.floor(rows).astype(int)
    c0 = np.floor(cols).astype(int)
    r1 = np.minimum(r0 + 1, src_h - 1)
    c1 = np.minimum(c0 + 1, src_w - 1)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[None, :]
    a = image[np.ix_(r0, c0)]
    b = image[np.ix_(r0, c1)]
    c = image[np.ix_(r1, c0)]
    d = image[np.ix_(r1, c1)]
    return (a * (1 - fr) * (1 - fc) + b * (1 - fr) * fc
            + c * fr * (1 - fc) + d * fr * fc)


def discover_corpus(root, manifest_file=None) -> DatasetManifest:
    """Build a manifest by scanning ``<root>/<class>/*`` image files.

    ``<root>/manifest.csv`` (or an explicit ``manifest_file``) takes
    precedence over the directory scan.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus root not found: {root}")
    if manifest_file is None:
        default = root / "manifest.csv"
        manifest_file = default if default.is_file() else None
    if manifest_file is not None:
        return load_manifest_file(root, manifest_file)
    entries = []
    classes = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        files = sorted(p.name for p in sub.iterdir()
                       if p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            continue
        classes.append(sub.name)
        entries.extend((str(PurePosixPath(sub.name) / f), sub.name) for f in files)
    return DatasetManifest(root=root, entries=tuple(entries),
                           class_names=tuple(classes))


def load_manifest_file(root, path) -> DatasetManifest:
    """Parse ``relative_path,class_name`` records (UTF-8, no header)."""
    root = Path(root)
    entries = []
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ValueError(f"{path}:{ln}: expected 'relative_path,class_name', "
                             f"got {line!r}")
        entries.append((parts[0].strip(), parts[1].strip()))
    classes = tuple(sorted({cls for _, cls in entries}))
    return DatasetManifest(root=root, entries=tuple(entries), class_names=classes)


def split_dataset(manifest: DatasetManifest, ratio: float = 0.8,
                  seed: int = 0) -> DatasetSplit:
    """Stratified split: per class, seeded shuffle, first round(ratio*n) train."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must be in (0,1), got {ratio}")
    train: list[tuple[str, str]] = []
    test: list[tuple[str, str]] = []
    for ci, cls in enumerate(manifest.class_names):
        members = [e for e in manifest.entries if e[1] == cls]
        if len(members) < 5:
            raise ValueError(f"class {cls!r} has only {len(members)} samples; "
                             f"need at least 5 to split")
        members.sort()
        rng = np.random.default_rng([seed, 4, ci])
        order = rng.permutation(len(members))
        n_train = int(round(ratio * len(members)))
        train.extend(members[i] for i in order[:n_train])
        test.extend(members[i] for i in order[n_train:])
    return DatasetSplit(train=tuple(train), test=tuple(test),
                        class_names=manifest.class_names, ratio=ratio, seed=seed)


def save_split(split: DatasetSplit, path) -> None:
    lines = [f"{rel},{cls},train" for rel, cls in split.train]
    lines += [f"{rel},{cls},test" for rel, cls in split.test]
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_split(path) -> DatasetSplit:
    """Read a split record file back; seed is unknown for loaded splits."""
    train = []
    test = []
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3 or parts[2] not in ("train", "test"):
            raise ValueError(f"{path}:{ln}: expected "
                             f"'relative_path,class_name,train|test', got {line!r}")
        (train if parts[2] == "train" else test).append((parts[0], parts[1]))
    if not train or not test:
        raise ValueError(f"split file {path} lacks a train or test part")
    classes = tuple(sorted({cls for _, cls in train + test}))
    total = len(train) + len(test)
    return DatasetSplit(train=tuple(train), test=tuple(test), class_names=classes,
                        ratio=len(train) / total, seed=None)


def batch_indices(n: int, batch_size: int, seed: int, epoch: int):
    """Seeded, epoch-dependent permutation of range(n) cut into batches.

    Every index appears exactly once per epoch; the final batch may be short.
    """
    if n < 1:
        raise ValueError("cannot iterate batches over an empty set")
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    rng = np.random.default_rng([seed, 2, epoch])
    order = rng.permutation(n)
    for lo in range(0, n, batch_size):
        yield order[lo:lo + batch_size]


def batch_iter(samples, batch_size: int = 50, seed: int = 0, epoch: int = 0):
    """Iterate (image, label) pairs as :class:`Batch` objects."""
    samples = list(samples)
    for idx in batch_indices(len(samples), batch_size, seed, epoch):
        picked = [samples[i] for i in idx]
        yield Batch(images=[s[0] for s in picked], labels=[s[1] for s in picked])


def frequency_base(image: np.ndarray) -> np.ndarray:
    """128x128 high-pass representation shared by the frequency-domain inputs."""
    return wavelet_preprocess(resize_bilinear(image, (128, 128)))


def prepare_input(image: np.ndarray, domain: str, size: int) -> np.ndarray:
    """Network-ready (1, size, size) float32 input in [0, 1].

    domain 's': plain resize of the grayscale image.  domain 'f': resize to
    128x128, high-pass wavelet preprocessing, then resize to the target.
    """
    if (domain, size) not in INPUT_COMBOS:
        raise ValueError(f"invalid input combination ({domain!r}, {size}); "
                         f"valid: {list(INPUT_COMBOS)}")
    if domain == "s":
        out = resize_bilinear(image, (size, size))
    else:
        out = resize_bilinear(frequency_base(image), (size, size))
    return out.astype(np.float32)[None]
