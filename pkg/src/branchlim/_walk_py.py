"""Pure-Python downcrossing walk, used when the compiled kernel is unavailable.

Arithmetic and branch order match ``_walk.pyx`` exactly, so both backends
return identical results for identical input.
"""

import math


def walk_chunk(z, x, j, n_steps, counts, occ, a, delta, drift_dt, sd, corr,
               i_lo, target, max_steps):
    """Advance one path through the normals in ``z``.

    Returns ``(x, j, n_steps, used, status)``; status 0 means the chunk ran
    out, 1 that the downcrossing count at level ``a`` reached ``target``,
    2 that ``max_steps`` was hit.
    """
    nc, no = len(counts), len(occ)
    ia = -i_lo
    zs = z.tolist()
    for i, zi in enumerate(zs):
        if n_steps >= max_steps:
            return x, j, n_steps, i, 2
        idx = math.floor((x - a) / delta) - i_lo
        if 0 <= idx < no:
            occ[idx] += 1
        x = x + drift_dt + sd * zi
        n_steps += 1
        while x <= a + (j - 1) * delta + corr:
            j -= 1
            idx = j - i_lo
            if 0 <= idx < nc:
                counts[idx] += 1
                if idx == ia and counts[idx] >= target:
                    return x, j, n_steps, i + 1, 1
        while x >= a + (j + 1) * delta - corr:
            j += 1
    return x, j, n_steps, len(zs), 0
