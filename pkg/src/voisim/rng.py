"""Named random streams.

Every random quantity in a run is drawn from its own generator, derived from
the run seed and a (family, index) spawn key. Two consequences this package
relies on:

* runs are pure functions of the seed (bit-reproducible), and
* streams are common random numbers across policies: the source noise,
  erasure draws, and rate-process draws for a given seed do not depend on
  which policy is being simulated, so paired policy comparisons difference
  out shared randomness.
"""

import numpy as np

# Stream families. Index is the source number for the first three and the
# link number for the channel families; the policy stream has a single index.
X0 = 0
PROCESS_NOISE = 1
MEASUREMENT_NOISE = 2
ERASURE = 3
RATE = 4
POLICY = 5


def stream(seed: int, family: int, index: int = 0) -> np.random.Generator:
    """Independent generator for one noise family of one seeded run."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(family, index)))
