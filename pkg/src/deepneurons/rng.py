"""Named random sub-streams derived from one root seed.

The order of ``STREAMS`` is part of the replay contract: appending is fine,
reordering changes every run.
"""
import numpy as np

STREAMS = ("task_sampling", "data_sampling", "theta_init", "phi_init")


def spawn_streams(seed) -> dict[str, np.random.Generator]:
    """``seed`` is an int or a sequence of ints (e.g. ``(root, trial)``)."""
    entropy = int(seed) if np.isscalar(seed) else [int(s) for s in seed]
    children = np.random.SeedSequence(entropy).spawn(len(STREAMS))
    return {name: np.random.default_rng(child) for name, child in zip(STREAMS, children)}
