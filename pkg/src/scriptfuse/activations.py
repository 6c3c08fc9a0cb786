"""Per-channel activation-map image dumps for convolution and pool layers."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .pipeline import _CONV_BLOCKS, Network, NetworkSpec


def expected_map_count(spec: NetworkSpec) -> int:
    """Total channels over all conv and pool outputs (one image each)."""
    return 2 * sum(ch for ch, _ in _CONV_BLOCKS[spec.depth])


def _to_u8(map2d: np.ndarray) -> np.ndarray:
    lo = float(map2d.min())
    hi = float(map2d.max())
    if hi <= lo:
        return np.zeros(map2d.shape, dtype=np.uint8)
    scaled = (map2d - lo) / (hi - lo)
    return np.round(scaled * 255).astype(np.uint8)


def dump_activations(network: Network, image: np.ndarray, out_dir) -> list[str]:
    """Write one min-max scaled 8-bit PNG per conv/pool channel.

    ``image`` is a grayscale [0,1] array; it is prepared for the network's
    own domain and size.  Returns the written filenames in order.
    """
    from .data import prepare_input

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    prepared = prepare_input(image, network.spec.domain,
                             network.spec.input_size)
    written = []
    for name, out in network.activations(prepared[None]):
        if not (name.startswith("conv") or name.startswith("pool")):
            continue
        maps = out[0]
        for channel in range(maps.shape[0]):
            filename = f"{name}_{channel:03d}.png"
            Image.fromarray(_to_u8(maps[channel]), mode="L").save(
                out_dir / filename)
            written.append(filename)
    return written
