"""Pure-Python kernels. Reference behaviour for the compiled twins in ``_kernels.pyx``.

Both versions pop the frontier in the same total order
``(-quality, pixel index, parent index)``, so their output is bit-identical.
"""
import heapq
import math

import numpy as np

TWO_PI = 2.0 * math.pi


def _wrapped_step(d):
    if d > math.pi:
        return d - TWO_PI
    if d <= -math.pi:
        return d + TWO_PI
    return d


def grow_region(wrapped, quality, threshold):
    """Quality-guided flood fill.

    Returns ``(unwrapped, origin, seeds)``. Pixels at or above ``threshold``
    form components 1..K, each seeded at its best remaining pixel (``seeds``
    holds their flat indices). Pixels below threshold are unwrapped afterwards
    from whichever component reaches them first and inherit its label in
    ``origin``; below-threshold islands no component reaches get fresh labels
    K+1, ... NaN pixels stay NaN with origin 0.
    """
    wrapped = np.ascontiguousarray(wrapped, dtype=np.float64)
    quality = np.ascontiguousarray(quality, dtype=np.float64)
    rows, cols = wrapped.shape
    n = rows * cols
    psi = wrapped.ravel().tolist()
    q = quality.ravel().tolist()
    valid = [(psi[i] == psi[i]) and (q[i] == q[i]) for i in range(n)]
    high = [valid[i] and q[i] >= threshold for i in range(n)]
    done = [False] * n
    unw = [math.nan] * n
    lab = [0] * n
    seeds = []

    order = sorted((i for i in range(n) if valid[i]), key=lambda i: (-q[i], i))

    def neighbours(i):
        r, c = divmod(i, cols)
        if r > 0:
            yield i - cols
        if r < rows - 1:
            yield i + cols
        if c > 0:
            yield i - 1
        if c < cols - 1:
            yield i + 1

    def flood(heap, allowed):
        while heap:
            negq, j, parent = heapq.heappop(heap)
            if done[j]:
                continue
            done[j] = True
            unw[j] = unw[parent] + _wrapped_step(psi[j] - psi[parent])
            lab[j] = lab[parent]
            for k in neighbours(j):
                if not done[k] and allowed[k]:
                    heapq.heappush(heap, (-q[k], k, j))

    def start(i, label, allowed):
        done[i] = True
        unw[i] = psi[i]
        lab[i] = label
        heap = []
        for k in neighbours(i):
            if not done[k] and allowed[k]:
                heapq.heappush(heap, (-q[k], k, i))
        flood(heap, allowed)

    label = 0
    for i in order:
        if high[i] and not done[i]:
            label += 1
            seeds.append(i)
            start(i, label, high)

    # below-threshold pass: grow out of every finished pixel at once
    heap = []
    for i in range(n):
        if done[i]:
            for k in neighbours(i):
                if not done[k] and valid[k]:
                    heap.append((-q[k], k, i))
    heapq.heapify(heap)
    flood(heap, valid)
    for i in order:
        if not done[i]:
            label += 1
            start(i, label, valid)

    return (np.array(unw).reshape(rows, cols), np.array(lab, dtype=np.int64).reshape(rows, cols),
            np.array(seeds, dtype=np.int64))
