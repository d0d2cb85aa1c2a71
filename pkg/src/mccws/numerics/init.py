import zlib

import numpy as np


def param_rng(seed: int, name: str = "") -> np.random.Generator:
    """Generator derived from a base seed and a parameter name."""
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(name.encode("utf-8"))]))


def xavier_uniform_init(shape, seed: int, dtype=np.float64, name: str = "") -> np.ndarray:
    """Glorot/Xavier uniform draw in +-sqrt(6 / (fan_in + fan_out))."""
    shape = tuple(shape)
    if len(shape) != 2:
        raise ValueError(f"xavier_uniform_init needs a 2-D shape, got {shape}")
    fan_in, fan_out = shape
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return param_rng(seed, name).uniform(-bound, bound, size=shape).astype(dtype)
