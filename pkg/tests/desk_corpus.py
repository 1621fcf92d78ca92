"""Small natural-image corpus cut from sample images shipped with
scikit-image, scikit-learn and matplotlib.

Only photographs are used: the texture swatches (brick, grass, gravel)
and microscopy slides (cell, ihc) in those packages are left out.
Tiles are 256 px with a 128 px stride and are taken round-robin across
sources, so a short prefix of the list still covers many scenes. Flat
or clipped tiles (masks, black backgrounds) are dropped.
"""

import os
from pathlib import Path

import numpy as np
from PIL import Image

from ppdsteg.image_io import luma_bt601, save_image

SOURCES = {
    "skimage": ["astronaut.png", "camera.png", "chelsea.png", "clock_motion.png",
                "coffee.png", "coins.png", "hubble_deep_field.jpg", "moon.png",
                "motorcycle_left.png", "motorcycle_right.png", "retina.jpg", "rocket.jpg"],
    "sklearn": ["china.jpg", "flower.jpg"],
    "matplotlib": ["grace_hopper.jpg"],
}


def _source_dirs():
    dirs = {}
    try:
        import skimage.data
        dirs["skimage"] = Path(os.path.dirname(skimage.data.__file__))
    except ImportError:
        pass
    try:
        import sklearn.datasets
        dirs["sklearn"] = Path(os.path.dirname(sklearn.datasets.__file__)) / "images"
    except ImportError:
        pass
    try:
        import matplotlib
        dirs["matplotlib"] = Path(matplotlib.get_data_path()) / "sample_data"
    except ImportError:
        pass
    return dirs


def source_images():
    out = []
    for pkg, root in _source_dirs().items():
        for name in SOURCES[pkg]:
            path = root / name
            if not path.exists():
                continue
            with Image.open(path) as im:
                if im.mode == "L":
                    a = np.asarray(im)
                else:
                    a = luma_bt601(np.asarray(im.convert("RGB")))
            out.append((Path(name).stem, a))
    return out


def _usable(tile):
    if tile.std() < 8:
        return False
    clipped = np.mean((tile == 0) | (tile == 255))
    return clipped < 0.05


def natural_tiles(n, size=256, stride=128):
    """Up to ``n`` (name, array) tiles of ``size`` x ``size`` pixels."""
    stride = stride or size
    per_source = []
    for stem, a in source_images():
        tiles = []
        h, w = a.shape
        for i in range(0, h - size + 1, stride):
            for j in range(0, w - size + 1, stride):
                t = a[i:i + size, j:j + size]
                if _usable(t):
                    tiles.append((f"{stem}_{i}_{j}", np.ascontiguousarray(t)))
        per_source.append(tiles)
    out = []
    depth = 0
    while len(out) < n and any(depth < len(t) for t in per_source):
        for tiles in per_source:
            if depth < len(tiles) and len(out) < n:
                out.append(tiles[depth])
        depth += 1
    return out


def write_corpus(directory, n, size=256, stride=128):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tiles = natural_tiles(n, size, stride)
    for name, a in tiles:
        save_image(a, directory / f"{name}.pgm")
    return [name for name, _ in tiles]
