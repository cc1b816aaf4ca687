import numpy as np
import pytest

from landpatch.dataset import ImageEntry, make_dataset
from landpatch.nn import TrainConfig, default_convnet, train


def rand_image(rng, side=16):
    return rng.integers(0, 256, size=(side, side, 3), dtype=np.uint8)


def blob_image(rng, side, mean, sigma=0.1):
    """Gaussian-noise image around a mean intensity (both in [0, 1])."""
    vals = np.clip(rng.normal(mean, sigma, size=(side, side, 3)), 0.0, 1.0)
    return (vals * 255.0).round().astype(np.uint8)


def blob_dataset(n_per_class=20, side=16, means=(0.25, 0.75), sigma=0.1, seed=0,
                 labels=("background", "target")):
    """Two-class dataset separable by mean intensity; positive = brighter."""
    rng = np.random.default_rng(seed)
    neg, pos = labels
    classes = {
        neg: [ImageEntry(f"{neg}_{i:03d}.png", blob_image(rng, side, means[0], sigma))
              for i in range(n_per_class)],
        pos: [ImageEntry(f"{pos}_{i:03d}.png", blob_image(rng, side, means[1], sigma))
              for i in range(n_per_class)],
    }
    return make_dataset(classes, positive_label=pos)


def write_dataset_tree(root, counts, side=8, seed=0, geo=None):
    """Materialize a labeled folder tree; returns the root path."""
    from landpatch.imagery import save_png

    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    for label, n in counts.items():
        sub = root / label
        sub.mkdir(exist_ok=True)
        for i in range(n):
            save_png(rand_image(rng, side), sub / f"{label}_{i:03d}.png")
    if geo:
        lines = ["filename,label,lat,lon"]
        for label, n in counts.items():
            for i in range(n):
                lines.append(f"{label}_{i:03d}.png,{label},{geo[0]:.6f},{geo[1]:.6f}")
        (root / "manifest.csv").write_text("\r\n".join(lines) + "\r\n")
    return root


@pytest.fixture(scope="session")
def fitted_blob_checkpoint():
    """A model trained to separate the blob classes; shared across tests."""
    ds = blob_dataset(n_per_class=20, side=16, seed=7)
    cfg = TrainConfig(max_epochs=8, batch_size=8, learning_rate=1e-3,
                      early_stopping_patience=0, val_split=0.2, seed=3)
    ckpt = train(ds, default_convnet(16), cfg)
    return ckpt


@pytest.fixture(scope="session")
def blob_testset():
    return blob_dataset(n_per_class=10, side=16, seed=99)
