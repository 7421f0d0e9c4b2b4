import hashlib
import json
import time

import numpy as np


def get_current_timestamp():
    return int(time.time() * 1000)


def canonical_json(data):
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def config_hash(data):
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def sample_rng(seed, m):
    """
    Independent generator per (seed, sample index)

    :param seed: base seed
    :param m: sample index
    :return: numpy Generator
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(m)]))


def voigt_pairs(dim):
    if dim == 2:
        return [(0, 0), (1, 1), (0, 1)]
    return [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)]


def check_dimension(dim):
    if dim not in (2, 3):
        raise ValueError("dimension must be 2 or 3, got {}".format(dim))
    return dim
