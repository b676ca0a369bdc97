"""Counter-based random substreams.

Every random draw in the package flows from a single 64-bit seed through
Philox counter blocks keyed by a small integer path, e.g. (stream class,
iteration, column). Distinct paths give non-overlapping stream segments, so
samplers stay bitwise reproducible no matter how work is scheduled.
"""

import numpy as np

# stream classes; path layout is (class, c2, c3)
THETA = 1
COLUMNS = 2
LAMBDA = 3
SCENARIO = 5
KMEANS = 6
FIT = 7

_MASK64 = (1 << 64) - 1


def substream(seed, c1, c2=0, c3=0):
    """Generator positioned at the (c1, c2, c3) counter block of ``seed``'s stream."""
    counter = np.array([0, c1 & _MASK64, c2 & _MASK64, c3 & _MASK64], dtype=np.uint64)
    bitgen = np.random.Philox(key=np.uint64(seed & _MASK64), counter=counter)
    return np.random.Generator(bitgen)


class Substreams:
    """Reusable substream cursor for one owner (e.g. one chain).

    ``get(c1, c2, c3)`` repositions a single generator at the requested
    counter block and returns it, bit-for-bit equivalent to
    ``substream(seed, c1, c2, c3)`` but without reconstruction overhead. The
    returned generator is only valid until the next ``get`` on this instance,
    so instances must not be shared across threads.
    """

    def __init__(self, seed):
        self._bitgen = np.random.Philox(key=np.uint64(seed & _MASK64))
        self._gen = np.random.Generator(self._bitgen)

    def get(self, c1, c2=0, c3=0):
        state = self._bitgen.state
        state["state"]["counter"][:] = (0, c1 & _MASK64, c2 & _MASK64, c3 & _MASK64)
        state["buffer_pos"] = 4  # force a refill at the new counter
        state["has_uint32"] = 0
        self._bitgen.state = state
        return self._gen


def column_path(sample_index, column):
    """Pack a (sample, column) pair into one 64-bit path component."""
    return (sample_index << 32) | column


def derive_seed(seed, c1, c2=0, c3=0):
    """A fresh 63-bit seed deterministically derived from ``seed`` and a path."""
    return int(substream(seed, c1, c2, c3).integers(0, 1 << 63))
