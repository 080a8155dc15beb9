import numpy as np


def derive_rng(seed, *keys):
    """Generator keyed on ``(seed, *keys)``; independent of call order or thread."""
    return np.random.default_rng([int(seed), *(int(k) for k in keys)])
