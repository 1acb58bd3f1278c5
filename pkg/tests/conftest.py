import numpy as np
import pytest

from ptybayes.generator import GeneratorModel, LayerSpec


def f32(a):
    """f32-representable doubles, matching what the PGEN loader produces."""
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def tiny_model(seed=0, latent_dim=4, with_conv=True, activation="relu"):
    """Small generator (output 8x8) exercising most of the layer vocabulary."""
    rng = np.random.default_rng(seed)
    if with_conv:
        layers = [
            LayerSpec("dense", (32, latent_dim),
                      f32(rng.normal(0.0, 0.5, (32, latent_dim))),
                      f32(rng.normal(0.0, 0.1, 32))),
            LayerSpec("reshape", (2, 4, 4)),
            LayerSpec(activation),
            LayerSpec("conv_transpose_2d", (2, 1, 4, 4),
                      f32(rng.normal(0.0, 0.3, (2, 1, 4, 4))),
                      f32(rng.normal(0.0, 0.1, 1))),
        ]
    else:
        layers = [
            LayerSpec("dense", (32, latent_dim),
                      f32(rng.normal(0.0, 0.5, (32, latent_dim))),
                      f32(rng.normal(0.0, 0.1, 32))),
            LayerSpec(activation),
            LayerSpec("dense", (64, 32),
                      f32(rng.normal(0.0, 0.3, (64, 32))),
                      f32(rng.normal(0.0, 0.1, 64))),
            LayerSpec("reshape", (1, 8, 8)),
        ]
    layers.append(LayerSpec("channel_affine", (1,), f32([1.2]), f32([0.1])))
    layers.append(LayerSpec("sigmoid"))
    return GeneratorModel(latent_dim=latent_dim, layers=layers)


def constant_model(value=0.5, side=8, latent_dim=3):
    """Generator whose output ignores the latent (zero weights)."""
    n = side * side
    logit = float(np.log(value / (1.0 - value)))
    layers = [
        LayerSpec("dense", (n, latent_dim), f32(np.zeros((n, latent_dim))),
                  f32(np.full(n, logit))),
        LayerSpec("reshape", (1, side, side)),
        LayerSpec("sigmoid"),
    ]
    return GeneratorModel(latent_dim=latent_dim, layers=layers)


def blob_image(seed, side=28):
    """Deterministic smooth uint8 test image (sum of Gaussian bumps)."""
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:side, 0:side]
    img = np.zeros((side, side))
    for _ in range(3):
        cy, cx = rng.uniform(side * 0.2, side * 0.8, 2)
        s = rng.uniform(side * 0.1, side * 0.25)
        img += rng.uniform(0.5, 1.0) * np.exp(-((y - cy) ** 2 + (x - cx) ** 2)
                                              / (2 * s * s))
    img = img / img.max() * 255.0
    return img.astype(np.uint8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
