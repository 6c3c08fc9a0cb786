"""Network family structure, feature fusion, selectors, and training loop."""

import numpy as np
import pytest

from scriptfuse.engine.layers import Conv2d, Dense, Dropout, LayerSpec
from scriptfuse.pipeline import (
    CANONICAL_SPECS,
    FEATURE_WIDTH,
    FUSED_WIDTH,
    NUM_CLASSES,
    EpochStats,
    NetworkSpec,
    TrainConfig,
    build_fusion_head,
    build_network,
    extract_features,
    features_for_array,
    flat_length,
    fuse_features,
    fuse_matrix,
    layer_plan,
    ordered_selector,
    parse_selector,
    predict_classes,
    selector_stream,
    subset_report_plan,
    train_fusion_mlp,
    train_on_arrays,
)

# (input_size, depth) -> flattened length entering fc1
FLAT_LENGTHS = {
    (32, 2): 4096,
    (48, 2): 9216,
    (128, 2): 65536,
    (32, 3): 2048,
    (48, 3): 4608,
    (128, 3): 32768,
}

# depth -> ((channels, filter, pad), ...)
CONV_TABLE = {
    2: ((32, 5, 2), (64, 5, 2)),
    3: ((32, 7, 3), (64, 5, 2), (128, 3, 1)),
}


def test_canonical_family_is_ten_networks():
    assert len(CANONICAL_SPECS) == 10
    assert len(set(CANONICAL_SPECS)) == 10
    expected = [
        ("s", 32, 2), ("s", 32, 3), ("s", 48, 2), ("s", 48, 3),
        ("s", 128, 2), ("s", 128, 3),
        ("f", 32, 2), ("f", 32, 3), ("f", 48, 2), ("f", 48, 3),
    ]
    assert [(s.domain, s.input_size, s.depth) for s in CANONICAL_SPECS] == expected
    assert FUSED_WIDTH == 10240 and FEATURE_WIDTH == 1024


def test_spec_parse_roundtrip_and_label():
    for spec in CANONICAL_SPECS:
        assert NetworkSpec.parse(str(spec)) == spec
    assert str(NetworkSpec("f", 48, 3)) == "f,48,3"
    assert NetworkSpec("s", 128, 2).label == "s_128_2"


def test_spec_validation():
    with pytest.raises(ValueError, match="domain"):
        NetworkSpec("q", 32, 2)
    with pytest.raises(ValueError, match="depth"):
        NetworkSpec("s", 32, 4)
    with pytest.raises(ValueError, match="invalid for domain"):
        NetworkSpec("f", 128, 2)  # frequency nets stop at 48
    with pytest.raises(ValueError, match="invalid for domain"):
        NetworkSpec("s", 64, 2)
    with pytest.raises(ValueError, match="'d,x,y'"):
        NetworkSpec.parse("s,32")


def test_layer_spec_invariants():
    with pytest.raises(ValueError, match="kind"):
        LayerSpec("pool")
    with pytest.raises(ValueError, match="channels"):
        LayerSpec("conv", channels=48, filter_size=5, pad=2)
    with pytest.raises(ValueError, match="pad"):
        LayerSpec("conv", channels=32, filter_size=5, pad=1)
    with pytest.raises(ValueError, match="2x2"):
        LayerSpec("maxpool", filter_size=3)


@pytest.mark.parametrize("spec", CANONICAL_SPECS, ids=str)
def test_layer_plan_matches_family_table(spec):
    plan = layer_plan(spec)
    convs = [p for p in plan if p.kind == "conv"]
    pools = [p for p in plan if p.kind == "maxpool"]
    assert len(convs) == len(pools) == spec.depth
    assert tuple((p.channels, p.filter_size, p.pad) for p in convs) \
        == CONV_TABLE[spec.depth]
    denses = [p for p in plan if p.kind == "dense"]
    assert [p.channels for p in denses] == [1024, 512]
    assert plan[-1].kind == "softmax" and plan[-1].channels == NUM_CLASSES
    drops = [p for p in plan if p.kind == "dropout"]
    assert len(drops) == 1 and drops[0].dropout_p == 0.5
    # every conv and the first dense are ReLU-activated; so is the second dense
    kinds = [p.kind for p in plan]
    for i, p in enumerate(plan[:-1]):
        if p.kind in ("conv", "dense"):
            assert kinds[i + 1] == "relu"


@pytest.mark.parametrize("spec", CANONICAL_SPECS, ids=str)
def test_flat_lengths(spec):
    assert flat_length(spec) == FLAT_LENGTHS[(spec.input_size, spec.depth)]


@pytest.mark.parametrize("spec", CANONICAL_SPECS, ids=str)
def test_built_network_structure(spec):
    net = build_network(spec, seed=0)
    names = [layer.name for layer in net.layers]
    if spec.depth == 2:
        assert names == ["conv1", "relu1", "pool1", "conv2", "relu2", "pool2",
                         "flatten", "fc1", "relu_fc1", "drop_fc1",
                         "fc2", "relu_fc2", "out"]
    else:
        assert names == ["conv1", "relu1", "pool1", "conv2", "relu2", "pool2",
                         "conv3", "relu3", "pool3",
                         "flatten", "fc1", "relu_fc1", "drop_fc1",
                         "fc2", "relu_fc2", "out"]
    convs = [l for l in net.layers if isinstance(l, Conv2d)]
    assert convs[0].weight.shape[1] == 1  # single grayscale input channel
    for conv, (ch, fs, _pad) in zip(convs, CONV_TABLE[spec.depth]):
        assert conv.weight.shape[0] == ch
        assert conv.weight.shape[2:] == (fs, fs)
    fc1, fc2, out = [l for l in net.layers if isinstance(l, Dense)]
    assert fc1.weight.shape == (1024, flat_length(spec))
    assert fc2.weight.shape == (512, 1024)
    assert out.weight.shape == (NUM_CLASSES, 512)
    assert net.layers[net.feature_tap].name == "relu_fc1"
    drop = [l for l in net.layers if isinstance(l, Dropout)]
    assert len(drop) == 1 and drop[0].p == 0.5


def test_first_conv_parameter_counts():
    # 5x5 single-channel stem: 32*25 + 32 biases
    net2 = build_network(NetworkSpec("s", 32, 2))
    conv1 = net2.layers[0]
    assert conv1.weight.size + conv1.bias.size == 832
    # 7x7 stem: 32*49 + 32
    net3 = build_network(NetworkSpec("s", 32, 3))
    conv1 = net3.layers[0]
    assert conv1.weight.size + conv1.bias.size == 1600


def test_forward_and_feature_shapes():
    net = build_network(NetworkSpec("s", 32, 2), seed=1)
    x = np.random.default_rng(0).random((3, 1, 32, 32), dtype=np.float32)
    logits = net.forward(x, train=False)
    assert logits.shape == (3, NUM_CLASSES)
    feats = net.features(x)
    assert feats.shape == (3, FEATURE_WIDTH)
    assert feats.min() >= 0.0  # post-ReLU tap
    assert feats.max() > 0.0


def test_extract_features_resizes_from_raw_grayscale():
    net = build_network(NetworkSpec("s", 32, 2), seed=1)
    image = np.random.default_rng(2).random((64, 80))
    vec = extract_features(net, image)
    assert vec.shape == (FEATURE_WIDTH,)
    assert vec.dtype == np.float32


def test_features_for_array_chunking():
    net = build_network(NetworkSpec("f", 32, 2), seed=3)
    x = np.random.default_rng(4).random((7, 1, 32, 32), dtype=np.float32)
    # identical chunking is bit-reproducible; different chunk sizes may pick
    # different BLAS kernels, so only agreement to rounding is promised
    assert np.array_equal(features_for_array(net, x, chunk=2),
                          features_for_array(net, x, chunk=2))
    assert np.allclose(features_for_array(net, x, chunk=2),
                       features_for_array(net, x, chunk=7),
                       rtol=1e-4, atol=1e-5)


def test_init_streams_are_per_network():
    a = build_network(NetworkSpec("s", 32, 2), seed=0)
    b = build_network(NetworkSpec("s", 48, 2), seed=0)
    a2 = build_network(NetworkSpec("s", 32, 2), seed=0)
    fc2 = lambda n: [l for l in n.layers if isinstance(l, Dense)][1].weight
    assert np.array_equal(fc2(a), fc2(a2))
    assert not np.array_equal(fc2(a), fc2(b))


def test_seed_none_builds_zeroed_placeholder():
    net = build_network(NetworkSpec("s", 32, 2), seed=None)
    for value in net.params().values():
        assert not value.any()


def test_fusion_head_shape_and_validation():
    head = build_fusion_head(2048, seed=0, selector_label="s,32")
    d1, d2 = [l for l in head.layers if isinstance(l, Dense)]
    assert d1.weight.shape == (512, 2048)
    assert d2.weight.shape == (NUM_CLASSES, 512)
    assert head.feature_len == 2048 and head.selector_label == "s,32"
    with pytest.raises(ValueError, match="multiple"):
        build_fusion_head(1000, seed=0, selector_label="x")
    with pytest.raises(ValueError, match="multiple"):
        build_fusion_head(0, seed=0, selector_label="x")


def test_fusion_stream_kept_clear_of_network_streams():
    assert selector_stream("all") >= 1000003
    assert selector_stream("s,32") != selector_stream("s,48")


def test_fuse_features_orders_and_slices():
    rng = np.random.default_rng(5)
    s32 = NetworkSpec("s", 32, 2)
    f32 = NetworkSpec("f", 32, 2)
    nets = {f32: build_network(f32, seed=0), s32: build_network(s32, seed=0)}
    image = rng.random((50, 50))
    fused = fuse_features(nets, image, selector=[f32, s32])
    assert fused.shape == (2048,)
    # canonical order puts the spatial net first regardless of selector order
    assert np.array_equal(fused[:1024], extract_features(nets[s32], image))
    assert np.array_equal(fused[1024:], extract_features(nets[f32], image))


def test_fuse_features_missing_network():
    s32 = NetworkSpec("s", 32, 2)
    nets = {s32: build_network(s32, seed=0)}
    with pytest.raises(ValueError, match="missing trained network"):
        fuse_features(nets, np.zeros((32, 32)),
                      selector=[s32, NetworkSpec("f", 48, 3)])


def test_fuse_matrix_concatenates_columns():
    s32 = NetworkSpec("s", 32, 2)
    f48 = NetworkSpec("f", 48, 3)
    by_spec = {
        f48: np.full((3, 1024), 2.0, dtype=np.float32),
        s32: np.full((3, 1024), 1.0, dtype=np.float32),
    }
    fused = fuse_matrix(by_spec, [f48, s32])
    assert fused.shape == (3, 2048)
    assert fused[:, :1024].mean() == 1.0 and fused[:, 1024:].mean() == 2.0
    with pytest.raises(ValueError, match="missing features"):
        fuse_matrix({s32: by_spec[s32]}, [s32, f48])


def test_ordered_selector_canonicalizes():
    shuffled = list(CANONICAL_SPECS[::-1])
    assert ordered_selector(shuffled) == CANONICAL_SPECS
    with pytest.raises(ValueError, match="at least one"):
        ordered_selector([])


def test_parse_selector_grammar():
    label, specs = parse_selector("all")
    assert label == "all" and specs == CANONICAL_SPECS
    label, specs = parse_selector("s")
    assert label == "s" and all(s.domain == "s" for s in specs) and len(specs) == 6
    label, specs = parse_selector("f")
    assert label == "f" and len(specs) == 4
    label, specs = parse_selector("s,48")
    assert label == "s,48"
    assert specs == (NetworkSpec("s", 48, 2), NetworkSpec("s", 48, 3))
    label, specs = parse_selector("f,32,3")
    assert label == "f,32,3" and specs == (NetworkSpec("f", 32, 3),)


def test_parse_selector_unions_canonicalize_and_dedupe():
    label, specs = parse_selector("f,48,3+s,32,2")
    assert specs == (NetworkSpec("s", 32, 2), NetworkSpec("f", 48, 3))
    assert label == "s,32,2+f,48,3"
    label, specs = parse_selector("s,32,2+s,32,2")
    assert specs == (NetworkSpec("s", 32, 2),)
    label, specs = parse_selector("s+f")
    assert label == "all" and specs == CANONICAL_SPECS
    label, specs = parse_selector("s,32,2+s,32,3")
    assert label == "s,32"  # collapses to the standard pair label


def test_parse_selector_rejects_garbage():
    for bad in ("", "q,32,2", "s,99", "s,32,2,9", "s,64"):
        with pytest.raises(ValueError):
            parse_selector(bad)


def test_subset_report_plan_is_the_eighteen_standard_groupings():
    plan = subset_report_plan()
    assert len(plan) == 18
    labels = [label for label, _ in plan]
    assert len(set(labels)) == 18
    assert labels[:10] == [str(s) for s in CANONICAL_SPECS]
    assert labels[-1] == "all"
    for label, specs in plan:
        relabel, reparsed = parse_selector(label)
        assert relabel == label and reparsed == tuple(specs)


def test_train_config_defaults_and_validation():
    config = TrainConfig()
    assert config.epochs == 30 and config.batch_size == 50
    assert config.dropout_p == 0.5 and config.target_accuracy is None
    assert config.optimizer.learning_rate == 1e-3
    with pytest.raises(ValueError, match="epochs"):
        TrainConfig(epochs=-1)
    with pytest.raises(ValueError, match="batch_size"):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError, match="dropout_p"):
        TrainConfig(dropout_p=1.0)


def _memorization_problem():
    """Four crisp 32x32 patterns, one per label."""
    images = np.zeros((4, 1, 32, 32), dtype=np.float32)
    images[0, 0, :16, :] = 1.0
    images[1, 0, 16:, :] = 1.0
    images[2, 0, :, :16] = 1.0
    images[3, 0, ::2, :] = 1.0
    labels = np.array([0, 1, 2, 3], dtype=np.int64)
    return images, labels


def test_network_memorizes_four_samples():
    images, labels = _memorization_problem()
    net = build_network(NetworkSpec("s", 32, 2), seed=0, dropout_p=0.0)
    config = TrainConfig(epochs=40, batch_size=4, seed=0, dropout_p=0.0,
                         target_accuracy=1.0)
    history = train_on_arrays(net, images, labels, config, stream=0)
    assert len(history) <= 40
    assert history[-1].loss < history[0].loss
    assert np.array_equal(predict_classes(net, images), labels)


def test_training_is_bitwise_deterministic():
    images, labels = _memorization_problem()
    outs = []
    for _ in range(2):
        net = build_network(NetworkSpec("s", 32, 2), seed=7)
        config = TrainConfig(epochs=3, batch_size=2, seed=7)
        history = train_on_arrays(net, images, labels, config, stream=0)
        outs.append((history, {k: v.copy() for k, v in net.params().items()}))
    (h1, p1), (h2, p2) = outs
    assert h1 == h2
    assert p1.keys() == p2.keys()
    for name in p1:
        assert np.array_equal(p1[name], p2[name]), name


def test_zero_epochs_leaves_parameters_untouched():
    images, labels = _memorization_problem()
    net = build_network(NetworkSpec("s", 32, 2), seed=2)
    before = {k: v.copy() for k, v in net.params().items()}
    history = train_on_arrays(net, images, labels,
                              TrainConfig(epochs=0), stream=0)
    assert history == []
    for name, value in net.params().items():
        assert np.array_equal(value, before[name])


def test_non_finite_loss_aborts_with_location():
    images = np.full((2, 1, 32, 32), np.nan, dtype=np.float32)
    labels = np.array([0, 1], dtype=np.int64)
    net = build_network(NetworkSpec("s", 32, 2), seed=0)
    with pytest.raises(FloatingPointError, match=r"epoch 0, batch 0"):
        train_on_arrays(net, images, labels, TrainConfig(epochs=1), stream=0)


def test_epoch_stats_records_running_quality():
    images, labels = _memorization_problem()
    net = build_network(NetworkSpec("s", 32, 2), seed=0, dropout_p=0.0)
    history = train_on_arrays(net, images, labels,
                              TrainConfig(epochs=2, batch_size=4,
                                          dropout_p=0.0), stream=0)
    assert [s.epoch for s in history] == [0, 1]
    for stats in history:
        assert isinstance(stats, EpochStats)
        assert 0.0 <= stats.accuracy <= 1.0
        assert np.isfinite(stats.loss)


def _clustered_features(n_per_class=6, width=1024, seed=0):
    rng = np.random.default_rng(seed)
    n = n_per_class * NUM_CLASSES
    labels = np.repeat(np.arange(NUM_CLASSES), n_per_class).astype(np.int64)
    feats = np.abs(rng.normal(0.0, 0.05, size=(n, width))).astype(np.float32)
    span = width // NUM_CLASSES
    for i, c in enumerate(labels):
        feats[i, c * span:(c + 1) * span] += 1.0
    return feats, labels


def test_fusion_head_separates_feature_clusters():
    feats, labels = _clustered_features()
    config = TrainConfig(epochs=60, batch_size=11, seed=0, dropout_p=0.0,
                         target_accuracy=1.0)
    head, history = train_fusion_mlp(feats, labels, config,
                                     selector_label="all")
    assert len(history) < 60  # reached the target before the cap
    assert np.array_equal(predict_classes(head, feats), labels)


def test_fusion_training_bitwise_deterministic():
    feats, labels = _clustered_features(n_per_class=3)
    config = TrainConfig(epochs=4, batch_size=11, seed=5)
    head1, h1 = train_fusion_mlp(feats, labels, config, selector_label="s")
    head2, h2 = train_fusion_mlp(feats, labels, config, selector_label="s")
    assert h1 == h2
    for name, value in head1.params().items():
        assert np.array_equal(value, head2.params()[name]), name
