"""The ten-network identification pipeline.

Each network is parameterized by ``(domain, input_size, depth)``: domain
``s`` (spatial) or ``f`` (wavelet high-pass), input side 32/48/128, and two
or three conv+pool blocks.  The valid set is
``{(s,32),(s,48),(s,128),(f,32),(f,48)} x {2,3}`` — ten networks, always
handled in that canonical order.

Every network ends in dense layers of 1024 and 512 units before the 11-way
softmax; the post-activation 1024-unit layer is the feature tap.  Fused
feature vectors concatenate taps in canonical network order; ensemble
subsets concatenate a subset and train a fresh fusion head on it.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import batch_indices, frequency_base, load_image, resize_bilinear
from .engine.adam import Adam, AdamConfig
from .engine.layers import (
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    LayerSpec,
    MaxPool2d,
    Network,
    ReLU,
)
from .engine.ops import softmax_cross_entropy_batch

NUM_CLASSES = 11
FEATURE_WIDTH = 1024


@dataclass(frozen=True)
class NetworkSpec:
    """(domain, input size, depth) identity of one network."""

    domain: str
    input_size: int
    depth: int

    def __post_init__(self):
        if self.domain not in ("s", "f"):
            raise ValueError(f"domain must be 's' or 'f', got {self.domain!r}")
        if self.depth not in (2, 3):
            raise ValueError(f"depth must be 2 or 3, got {self.depth}")
        sizes = (32, 48, 128) if self.domain == "s" else (32, 48)
        if self.input_size not in sizes:
            raise ValueError(
                f"input size {self.input_size} invalid for domain "
                f"{self.domain!r}; valid: {sizes}")

    def __str__(self):
        return f"{self.domain},{self.input_size},{self.depth}"

    @property
    def label(self) -> str:
        """Filename-safe form, e.g. ``s_128_3``."""
        return f"{self.domain}_{self.input_size}_{self.depth}"

    @classmethod
    def parse(cls, text: str) -> "NetworkSpec":
        parts = text.strip().split(",")
        if len(parts) != 3:
            raise ValueError(f"network spec must be 'd,x,y', got {text!r}")
        return cls(parts[0].strip(), int(parts[1]), int(parts[2]))


CANONICAL_SPECS = tuple(
    NetworkSpec(d, x, y)
    for d, x in (("s", 32), ("s", 48), ("s", 128), ("f", 32), ("f", 48))
    for y in (2, 3)
)

FUSED_WIDTH = FEATURE_WIDTH * len(CANONICAL_SPECS)

# Conv blocks per depth: (out_channels, filter_size).
_CONV_BLOCKS = {
    2: ((32, 5), (64, 5)),
    3: ((32, 7), (64, 5), (128, 3)),
}


def layer_plan(spec: NetworkSpec, dropout_p: float = 0.5) -> list[LayerSpec]:
    """Declarative layer sequence for one network."""
    plan = []
    for channels, fs in _CONV_BLOCKS[spec.depth]:
        plan.append(LayerSpec("conv", channels=channels, filter_size=fs,
                              pad=fs // 2))
        plan.append(LayerSpec("relu"))
        plan.append(LayerSpec("maxpool", filter_size=2))
    plan.append(LayerSpec("dense", channels=FEATURE_WIDTH))
    plan.append(LayerSpec("relu"))
    plan.append(LayerSpec("dropout", dropout_p=dropout_p))
    plan.append(LayerSpec("dense", channels=512))
    plan.append(LayerSpec("relu"))
    plan.append(LayerSpec("softmax", channels=NUM_CLASSES))
    return plan


def flat_length(spec: NetworkSpec) -> int:
    """Flattened length entering the first dense layer."""
    side = spec.input_size >> spec.depth
    channels = _CONV_BLOCKS[spec.depth][-1][0]
    return channels * side * side


def _init_rng(seed, stream: int):
    if seed is None:
        return None
    return np.random.default_rng([seed, 1, stream])


def build_network(spec: NetworkSpec, seed: int | None = 0,
                  dropout_p: float = 0.5) -> Network:
    """Instantiate one network; ``seed=None`` leaves parameters at zero
    (placeholder for checkpoint loading)."""
    if spec not in CANONICAL_SPECS:
        raise ValueError(f"{spec} is not one of the ten valid networks")
    rng = _init_rng(seed, CANONICAL_SPECS.index(spec))
    layers: list = []
    in_ch = 1
    for i, (out_ch, fs) in enumerate(_CONV_BLOCKS[spec.depth], start=1):
        layers.append(_conv(f"conv{i}", in_ch, out_ch, fs, rng))
        layers.append(ReLU(f"relu{i}"))
        layers.append(MaxPool2d(f"pool{i}"))
        in_ch = out_ch
    layers.append(Flatten())
    layers.append(_dense("fc1", flat_length(spec), FEATURE_WIDTH, rng))
    feature_tap = len(layers)
    layers.append(ReLU("relu_fc1"))
    layers.append(Dropout("drop_fc1", dropout_p))
    layers.append(_dense("fc2", FEATURE_WIDTH, 512, rng))
    layers.append(ReLU("relu_fc2"))
    layers.append(_dense("out", 512, NUM_CLASSES, rng))
    net = Network(layers, feature_tap=feature_tap)
    net.spec = spec
    net.selector_label = None
    net.feature_len = None
    return net


def build_fusion_head(feature_len: int, seed: int | None, selector_label: str,
                      dropout_p: float = 0.5) -> Network:
    """Fusion classifier: feature_len -> 512 (ReLU, dropout) -> 11-way softmax."""
    if feature_len < 1 or feature_len % FEATURE_WIDTH:
        raise ValueError(f"fusion input length must be a positive multiple of "
                         f"{FEATURE_WIDTH}, got {feature_len}")
    rng = _init_rng(seed, selector_stream(selector_label))
    layers = [
        _dense("fc1", feature_len, 512, rng),
        ReLU("relu_fc1"),
        Dropout("drop_fc1", dropout_p),
        _dense("out", 512, NUM_CLASSES, rng),
    ]
    net = Network(layers, feature_tap=None)
    net.spec = None
    net.selector_label = selector_label
    net.feature_len = feature_len
    return net


def _conv(name, in_ch, out_ch, fs, rng):
    if rng is None:
        layer = Conv2d(name, in_ch, out_ch, fs, np.random.default_rng(0))
        layer.weight[...] = 0.0
        return layer
    return Conv2d(name, in_ch, out_ch, fs, rng)


def _dense(name, n_in, n_out, rng):
    if rng is None:
        layer = Dense(name, n_in, n_out, np.random.default_rng(0))
        layer.weight[...] = 0.0
        return layer
    return Dense(name, n_in, n_out, rng)


def selector_stream(label: str) -> int:
    """Stable stream id for fusion-head seeding, distinct from the 0..9
    network streams."""
    return 1000003 + zlib.crc32(label.encode("utf-8"))


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 50
    optimizer: AdamConfig = field(default_factory=AdamConfig)
    seed: int = 0
    dropout_p: float = 0.5
    # Optional early stop: end training after the first epoch whose
    # running train accuracy reaches this value.
    target_accuracy: float | None = None

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p must be in [0,1), got {self.dropout_p}")


@dataclass
class EpochStats:
    epoch: int
    loss: float
    accuracy: float


def train_on_arrays(network: Network, images: np.ndarray, labels: np.ndarray,
                    config: TrainConfig, stream: int) -> list[EpochStats]:
    """Minibatch Adam training; returns per-epoch loss and running accuracy.

    The running accuracy is the fraction of batch samples classified
    correctly by the forward pass (dropout active) before each update.
    """
    opt = Adam(config.optimizer)
    params = network.params()
    drop_rng = np.random.default_rng([config.seed, 3, stream])
    history: list[EpochStats] = []
    for epoch in range(config.epochs):
        seen = 0
        correct = 0
        loss_sum = 0.0
        for bi, idx in enumerate(
                batch_indices(len(images), config.batch_size, config.seed, epoch)):
            xb = images[idx]
            yb = labels[idx]
            logits = network.forward(xb, train=True, rng=drop_rng)
            loss, probs, dlogits = softmax_cross_entropy_batch(logits, yb)
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch}, batch {bi}")
            grads = network.backward(dlogits)
            opt.step(params, grads)
            correct += int((probs.argmax(axis=1) == yb).sum())
            seen += len(yb)
            loss_sum += loss * len(yb)
        stats = EpochStats(epoch, loss_sum / seen, correct / seen)
        history.append(stats)
        if (config.target_accuracy is not None
                and stats.accuracy >= config.target_accuracy):
            break
    return history


class InputCache:
    """Loads and prepares corpus images, memoizing shared intermediates.

    Grayscale decodes and the 128x128 wavelet base are memoized until they
    occupy ``memo_bytes``; prepared (domain, size) datasets are memoized
    per entry list and can be dropped once a combination is done with.
    """

    def __init__(self, root, memo_bytes: int = 256 * 1024 * 1024):
        self.root = Path(root)
        self.memo_bytes = memo_bytes
        self._gray: dict[str, np.ndarray] = {}
        self._gray_bytes = 0
        self._fbase: dict[str, np.ndarray] = {}
        self._fbase_bytes = 0
        self._datasets: dict = {}

    def gray(self, rel: str) -> np.ndarray:
        img = self._gray.get(rel)
        if img is None:
            img = load_image(self.root / rel)
            if self._gray_bytes + img.nbytes <= self.memo_bytes:
                self._gray[rel] = img
                self._gray_bytes += img.nbytes
        return img

    def _frequency(self, rel: str) -> np.ndarray:
        img = self._fbase.get(rel)
        if img is None:
            img = frequency_base(self.gray(rel))
            if self._fbase_bytes + img.nbytes <= self.memo_bytes:
                self._fbase[rel] = img
                self._fbase_bytes += img.nbytes
        return img

    def prepared(self, rel: str, domain: str, size: int) -> np.ndarray:
        base = self.gray(rel) if domain == "s" else self._frequency(rel)
        return resize_bilinear(base, (size, size)).astype(np.float32)[None]

    def dataset(self, entries, class_names, domain: str, size: int):
        """(images (n,1,size,size) float32, labels (n,) int64) in entry order."""
        key = (domain, size, tuple(rel for rel, _ in entries))
        hit = self._datasets.get(key)
        if hit is not None:
            return hit
        index = {cls: i for i, cls in enumerate(class_names)}
        images = np.stack([self.prepared(rel, domain, size)
                           for rel, _ in entries])
        labels = np.array([index[cls] for _, cls in entries], dtype=np.int64)
        self._datasets[key] = (images, labels)
        return images, labels

    def drop_datasets(self, domain: str, size: int) -> None:
        for key in [k for k in self._datasets if k[0] == domain and k[1] == size]:
            del self._datasets[key]


def train_cnn(network: Network, train_entries, cache: InputCache, class_names,
              config: TrainConfig) -> list[EpochStats]:
    """Train one network on prepared inputs for its (domain, size)."""
    spec = network.spec
    images, labels = cache.dataset(train_entries, class_names, spec.domain,
                                   spec.input_size)
    return train_on_arrays(network, images, labels, config,
                           stream=CANONICAL_SPECS.index(spec))


def extract_features(network: Network, image: np.ndarray) -> np.ndarray:
    """1024-dim post-activation feature vector of one grayscale image."""
    from .data import prepare_input

    spec = network.spec
    prepared = prepare_input(image, spec.domain, spec.input_size)
    return network.features(prepared[None])[0]


def features_for_array(network: Network, images: np.ndarray,
                       chunk: int = 50) -> np.ndarray:
    """Feature vectors for a prepared (n,1,x,x) batch, extracted chunkwise."""
    parts = [network.features(images[lo:lo + chunk])
             for lo in range(0, len(images), chunk)]
    return np.concatenate(parts, axis=0)


def fuse_features(networks: dict[NetworkSpec, Network], image: np.ndarray,
                  selector=None) -> np.ndarray:
    """Concatenate per-network features in canonical order.

    ``selector`` restricts to a subset; by default all ten networks are
    required and the result is 10240-dim.
    """
    chosen = ordered_selector(selector or CANONICAL_SPECS)
    parts = []
    for spec in chosen:
        net = networks.get(spec)
        if net is None:
            raise ValueError(f"missing trained network for spec {spec}")
        parts.append(extract_features(net, image))
    return np.concatenate(parts)


def ordered_selector(selector) -> tuple[NetworkSpec, ...]:
    """Selector specs rearranged into canonical network order."""
    chosen = set(selector)
    if not chosen:
        raise ValueError("selector must name at least one network")
    bad = chosen - set(CANONICAL_SPECS)
    if bad:
        raise ValueError(f"selector contains invalid specs: {sorted(map(str, bad))}")
    return tuple(s for s in CANONICAL_SPECS if s in chosen)


def parse_selector(text: str):
    """Parse a selector expression into ``(label, specs)``.

    Grammar: ``all`` | ``s`` | ``f`` | ``d,x`` | ``d,x,y``, or unions of
    those joined with ``+``.
    """
    text = text.strip()
    specs: list[NetworkSpec] = []
    for part in text.split("+"):
        part = part.strip()
        if part == "all":
            specs.extend(CANONICAL_SPECS)
        elif part in ("s", "f"):
            specs.extend(s for s in CANONICAL_SPECS if s.domain == part)
        else:
            fields = part.split(",")
            if len(fields) == 2:
                d, x = fields[0].strip(), int(fields[1])
                matched = [s for s in CANONICAL_SPECS
                           if s.domain == d and s.input_size == x]
                if not matched:
                    raise ValueError(f"no networks match selector part {part!r}")
                specs.extend(matched)
            elif len(fields) == 3:
                specs.append(NetworkSpec.parse(part))
            else:
                raise ValueError(f"cannot parse selector part {part!r}")
    ordered = ordered_selector(specs)
    label = "all" if ordered == CANONICAL_SPECS else "+".join(map(str, ordered))
    # Compact labels for the standard groupings.
    for short in ("s", "f"):
        group = tuple(s for s in CANONICAL_SPECS if s.domain == short)
        if ordered == group:
            label = short
    for d, x in (("s", 32), ("s", 48), ("s", 128), ("f", 32), ("f", 48)):
        pair = tuple(s for s in CANONICAL_SPECS
                     if s.domain == d and s.input_size == x)
        if ordered == pair:
            label = f"{d},{x}"
    return label, ordered


def subset_report_plan():
    """The standard evaluation groupings: each network alone, both depths
    per (domain, size), each domain, and the full ensemble."""
    plan = [(str(spec), (spec,)) for spec in CANONICAL_SPECS]
    for d, x in (("s", 32), ("s", 48), ("s", 128), ("f", 32), ("f", 48)):
        plan.append((f"{d},{x}", tuple(s for s in CANONICAL_SPECS
                                       if s.domain == d and s.input_size == x)))
    for d in ("s", "f"):
        plan.append((d, tuple(s for s in CANONICAL_SPECS if s.domain == d)))
    plan.append(("all", CANONICAL_SPECS))
    return plan


def fuse_matrix(features_by_spec, selector) -> np.ndarray:
    """Concatenate per-spec feature matrices (n, 1024) along columns."""
    chosen = ordered_selector(selector)
    missing = [str(s) for s in chosen if s not in features_by_spec]
    if missing:
        raise ValueError(f"missing features for specs: {missing}")
    return np.concatenate([features_by_spec[s] for s in chosen], axis=1)


def train_fusion_mlp(features: np.ndarray, labels: np.ndarray,
                     config: TrainConfig, selector_label: str = "all"):
    """Train a fresh fusion head on fused feature rows.

    Returns ``(head, history)``.
    """
    features = np.asarray(features, dtype=np.float32)
    if features.ndim != 2:
        raise ValueError(f"features must be (n, F), got shape {features.shape}")
    head = build_fusion_head(features.shape[1], config.seed, selector_label,
                             dropout_p=config.dropout_p)
    history = train_on_arrays(head, features, np.asarray(labels), config,
                              stream=selector_stream(selector_label))
    return head, history


def predict_classes(network: Network, images: np.ndarray,
                    chunk: int = 50) -> np.ndarray:
    """Argmax class indices for prepared inputs or feature rows."""
    preds = []
    for lo in range(0, len(images), chunk):
        logits = network.forward(images[lo:lo + chunk], train=False)
        preds.append(logits.argmax(axis=1))
    return np.concatenate(preds)


def softmax_probs(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def evaluate_ensemble_subset(selector, train_features_by_spec, train_labels,
                             test_features_by_spec, test_labels,
                             config: TrainConfig, selector_label: str | None = None):
    """Fuse a subset's features, train a fresh head, evaluate on the test side.

    Returns ``(head, history, confusion_matrix, metrics_report)``.
    """
    from .metrics import evaluate

    chosen = ordered_selector(selector)
    if selector_label is None:
        selector_label = "+".join(map(str, chosen))
    x_train = fuse_matrix(train_features_by_spec, chosen)
    x_test = fuse_matrix(test_features_by_spec, chosen)
    head, history = train_fusion_mlp(x_train, train_labels, config,
                                     selector_label=selector_label)
    preds = predict_classes(head, x_test.astype(np.float32))
    matrix, report = evaluate(preds, test_labels, num_classes=NUM_CLASSES)
    return head, history, matrix, report
