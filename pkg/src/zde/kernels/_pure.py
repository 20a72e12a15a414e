"""Pure-Python reference kernels.  Same contract as the compiled module."""

from __future__ import annotations

import numpy as np

BACKEND = "pure"


def pattern_codes(field, translates, offsets, base):
    """Base-`base` code of the window at each translate position.

    field: flat int array (C-order dump of a materialized window);
    translates: flat indices into field; offsets: flat index offsets of the
    window cells in canonical cell order.  Code digits follow that order,
    most significant first.
    """
    f = field.tolist() if isinstance(field, np.ndarray) else list(field)
    ts = translates.tolist() if isinstance(translates, np.ndarray) else list(translates)
    offs = offsets.tolist() if isinstance(offsets, np.ndarray) else list(offsets)
    b = int(base)
    out = np.empty(len(ts), dtype=np.uint64)
    lst = out.tolist()
    for i, t in enumerate(ts):
        code = 0
        for o in offs:
            code = code * b + f[t + o]
        lst[i] = code
    out[:] = lst
    return out
