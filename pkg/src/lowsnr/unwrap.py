"""Phase unwrapping with residue accounting, component bridging and
triplet-closure correction.

The unwrapper is quality-guided region growing seeded at the most coherent
pixel. It is not a network-flow solver; what downstream stages rely on is
that every pixel of a component is congruent with its wrapped input, that
components can be offset-corrected by integer cycles, and that closure
errors can be repaired by integer cycles.
"""
from __future__ import annotations

import statistics
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from . import _backend
from .core import GeometryError, wrap
from .network import IfgNetwork

TWO_PI = 2.0 * np.pi


class UnwrapError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class UnwrapResult:
    """``components`` labels reliable pixels 1..K (0 = masked / below threshold).

    ``origin`` records, for every pixel, the component its unwrapped value
    descends from, so integer shifts applied to a component also move the
    low-quality pixels grown out of it.
    """

    unwrapped_phase: np.ndarray
    components: np.ndarray
    residue_count: int
    seed_pixel: tuple[int, int]
    origin: np.ndarray | None = None
    unbridged: tuple[int, ...] = ()
    offsets: dict = field(default_factory=dict)

    @property
    def n_components(self) -> int:
        return int(self.components.max(initial=0))


def residue_map(wrapped: np.ndarray) -> np.ndarray:
    """Signed charge (-1, 0, +1) of every 2x2 loop, shape ``(rows-1, cols-1)``.

    Loops touching a NaN get charge 0.
    """
    w = np.asarray(wrapped, dtype=np.float64)
    d1 = wrap(w[:-1, 1:] - w[:-1, :-1])
    d2 = wrap(w[1:, 1:] - w[:-1, 1:])
    d3 = wrap(w[1:, :-1] - w[1:, 1:])
    d4 = wrap(w[:-1, :-1] - w[1:, :-1])
    circ = d1 + d2 + d3 + d4
    charge = np.rint(np.nan_to_num(circ, nan=0.0) / TWO_PI).astype(np.int64)
    return charge


def count_residues(wrapped: np.ndarray) -> int:
    return int(np.count_nonzero(residue_map(wrapped)))


def unwrap(wrapped: np.ndarray, coherence: np.ndarray, quality_threshold: float = 0.3,
           backend: str | None = None) -> UnwrapResult:
    """Quality-guided unwrapping.

    Growth starts at the most coherent pixel and always extends to the best
    frontier pixel. Pixels at or above ``quality_threshold`` form components;
    when a component can grow no further the best untouched pixel seeds the
    next one. Pixels below threshold are filled in last and keep label 0.
    """
    wrapped = np.asarray(wrapped, dtype=np.float64)
    coherence = np.asarray(coherence, dtype=np.float64)
    if wrapped.shape != coherence.shape:
        raise GeometryError(f"phase {wrapped.shape} and coherence {coherence.shape} differ in shape")
    if not 0.0 <= quality_threshold <= 1.0:
        raise ValueError("quality_threshold must lie in [0, 1]")
    usable = np.isfinite(wrapped) & np.isfinite(coherence)
    if not np.any(usable & (coherence >= quality_threshold)):
        raise UnwrapError(f"no pixel reaches the quality threshold {quality_threshold}")
    kernels = _backend.get_kernels(backend)
    unw, origin, seeds = kernels.grow_region(wrapped, coherence, float(quality_threshold))
    high = usable & (coherence >= quality_threshold)
    components = np.where(high, origin, 0)
    seed = divmod(int(seeds[0]), wrapped.shape[1])
    return UnwrapResult(unwrapped_phase=unw, components=components, residue_count=count_residues(wrapped),
                        seed_pixel=(int(seed[0]), int(seed[1])), origin=origin)


def _offsets(max_distance):
    # half-plane so each unordered pixel pair is visited once
    for dr in range(0, max_distance + 1):
        for dc in range(-max_distance, max_distance + 1):
            if dr == 0 and dc <= 0:
                continue
            yield dr, dc


def find_bridge_arcs(result: UnwrapResult, coherence=None, min_coherence: float = 0.0,
                     max_distance: int = 5) -> np.ndarray:
    """Pixel pairs ``(r1, c1, r2, c2)`` joining different components.

    Candidate pairs lie within ``max_distance`` (Chebyshev) of each other, and
    both ends must reach ``min_coherence``. For each pair of components only
    the shortest available arcs are kept, since longer arcs are more likely to
    alias a steep phase gradient.
    """
    lab = result.components
    rows, cols = lab.shape
    ok = lab > 0
    if coherence is not None:
        ok &= np.nan_to_num(np.asarray(coherence), nan=-1.0) >= min_coherence
    found = []
    for dr, dc in _offsets(max_distance):
        r0, r1 = 0, rows - dr
        c0, c1 = max(0, -dc), min(cols, cols - dc)
        if r1 <= r0 or c1 <= c0:
            continue
        a = lab[r0:r1, c0:c1]
        b = lab[r0 + dr:r1 + dr, c0 + dc:c1 + dc]
        m = ok[r0:r1, c0:c1] & ok[r0 + dr:r1 + dr, c0 + dc:c1 + dc] & (a != b)
        rr, cc = np.nonzero(m)
        if rr.size:
            d = np.full(rr.size, max(dr, abs(dc)))
            found.append(np.column_stack([rr + r0, cc + c0, rr + r0 + dr, cc + c0 + dc, d]))
    if not found:
        return np.zeros((0, 4), dtype=np.int64)
    arcs = np.concatenate(found)
    la = lab[arcs[:, 0], arcs[:, 1]]
    lb = lab[arcs[:, 2], arcs[:, 3]]
    key = np.minimum(la, lb) * (lab.max() + 1) + np.maximum(la, lb)
    keep = np.zeros(len(arcs), dtype=bool)
    for k in np.unique(key):
        sel = key == k
        dmin = arcs[sel, 4].min()
        keep |= sel & (arcs[:, 4] <= dmin + 1)
    arcs = arcs[keep, :4]
    return arcs[np.lexsort((arcs[:, 3], arcs[:, 2], arcs[:, 1], arcs[:, 0]))]


def bridge_components(result: UnwrapResult, reliable_arcs, reference: int | None = None) -> UnwrapResult:
    """Shift components by integer cycles so they agree across the arcs.

    Components are visited breadth-first from ``reference`` (default: the
    component holding the seed pixel). Each newly reached component takes the
    median over its arcs of the cycle count that makes the unwrapped
    difference equal the wrapped one. Components no arc reaches are left
    alone and listed in ``unbridged``.
    """
    arcs = np.asarray(reliable_arcs, dtype=np.int64).reshape(-1, 4)
    lab = result.components
    origin = result.origin if result.origin is not None else lab
    phase = result.unwrapped_phase.copy()
    n = result.n_components
    if n <= 1:
        return replace(result, unwrapped_phase=phase, unbridged=(), offsets={})
    if reference is None:
        reference = int(lab[result.seed_pixel])
    la = lab[arcs[:, 0], arcs[:, 1]]
    lb = lab[arcs[:, 2], arcs[:, 3]]
    if np.any((la == lb) | (la == 0) | (lb == 0)):
        raise ValueError("every arc must join two different labelled components")

    adjacency: dict[int, list[int]] = {}
    for i, (a, b) in enumerate(zip(la.tolist(), lb.tolist())):
        adjacency.setdefault(a, []).append(i)
        adjacency.setdefault(b, []).append(i)

    shift = {reference: 0}
    queue = deque([reference])
    while queue:
        comp = queue.popleft()
        cand: dict[int, list[int]] = {}
        for i in adjacency.get(comp, []):
            a, b = int(la[i]), int(lb[i])
            other = b if a == comp else a
            if other in shift:
                continue
            p = (arcs[i, 0], arcs[i, 1]) if a == comp else (arcs[i, 2], arcs[i, 3])
            q = (arcs[i, 2], arcs[i, 3]) if a == comp else (arcs[i, 0], arcs[i, 1])
            # p already corrected by shift[comp]; q is raw
            phi_p = phase[p] + TWO_PI * shift[comp]
            delta = phase[q] - phi_p
            cand.setdefault(other, []).append(int(np.rint((wrap(delta) - delta) / TWO_PI)))
        for other in sorted(cand):
            shift[other] = statistics.median_low(cand[other])
            queue.append(other)

    for comp, k in shift.items():
        if k:
            phase[origin == comp] += TWO_PI * k
    unbridged = tuple(c for c in range(1, n + 1) if c not in shift)
    return replace(result, unwrapped_phase=phase, unbridged=unbridged,
                   offsets={c: k for c, k in sorted(shift.items()) if c != reference})


def closure_phase(ifg_ij, ifg_jk, ifg_ik):
    """``phi_ij + phi_jk - phi_ik``; multiples of 2 pi flag unwrapping errors."""
    return np.asarray(ifg_ij) + np.asarray(ifg_jk) - np.asarray(ifg_ik)


@dataclass(frozen=True, eq=False)
class ClosureCorrection:
    corrected: np.ndarray  # (n_pairs, rows, cols)
    cycles: np.ndarray  # integer cycles subtracted, same shape
    n_corrections: int
    unresolved: np.ndarray  # bool (rows, cols): no consistent assignment found


def _boundary_evidence(phase, region, n_regions):
    """Per region and interferogram: mean cycle jump across the region's boundary.

    For an interferogram unwrapped correctly the unwrapped step between
    neighbours equals the wrapped step, giving 0; a region that is off by
    ``k`` cycles in one interferogram shows ``+k`` on average.
    """
    m = phase.shape[0]
    total = np.zeros((n_regions + 1, m))
    count = np.zeros(n_regions + 1)
    for axis in (0, 1):
        for step in (1, -1):
            here = region
            there = np.roll(region, -step, axis=axis)
            valid = np.ones_like(region, dtype=bool)
            sl = [slice(None)] * 2
            sl[axis] = slice(-1, None) if step == 1 else slice(0, 1)
            valid[tuple(sl)] = False
            edge = valid & (here > 0) & (here != there)
            if not edge.any():
                continue
            nb = np.roll(phase, -step, axis=axis + 1)
            delta = phase[:, edge] - nb[:, edge]
            fin = np.isfinite(delta)
            cyc = np.where(fin, np.rint((delta - wrap(np.where(fin, delta, 0.0))) / TWO_PI), 0.0)
            ids = here[edge]
            count += np.bincount(ids, minlength=n_regions + 1)
            for k in range(m):
                total[:, k] += np.bincount(ids, weights=cyc[k], minlength=n_regions + 1)
    with np.errstate(invalid="ignore"):
        return np.where(count[:, None] > 0, total / np.maximum(count[:, None], 1), 0.0)


def _greedy(closure, C, evidence, max_steps):
    """Integer cycles per interferogram that zero the closure vector, or None."""
    r = closure.copy()
    k = np.zeros(C.shape[1], dtype=np.int64)
    ev = np.asarray(evidence, dtype=np.float64).copy()
    m = C.shape[1]
    used = np.flatnonzero(np.any(C != 0, axis=0))
    # candidate moves: (+1, j) then (-1, j); columns of ``moves`` are s * C[:, j]
    sign = np.concatenate([np.ones(used.size, np.int64), -np.ones(used.size, np.int64)])
    col = np.concatenate([used, used])
    moves = C[:, col] * sign
    for _ in range(max_steps):
        if not r.any():
            return k
        gain = np.abs(r).sum() - np.abs(r[:, None] - moves).sum(axis=0)
        if gain.max() <= 0:
            return None
        # lexicographic (gain, s * evidence, -j, s), largest wins
        cand = np.flatnonzero(gain == gain.max())
        order = np.lexsort((sign[cand], -col[cand], sign[cand] * ev[col[cand]]))
        best = cand[order[-1]]
        j, sgn = int(col[best]), int(sign[best])
        r = r - moves[:, best]
        k[j] += sgn
        ev[j] -= sgn
    return k if not r.any() else None


def _label_regions(vec_id, rows, cols):
    """4-connected regions of equal nonzero ``vec_id``; labels 1..n, 0 elsewhere."""
    v = vec_id.reshape(rows, cols)
    idx = np.arange(rows * cols).reshape(rows, cols)
    h = (v[:, :-1] == v[:, 1:]) & (v[:, :-1] > 0)
    w = (v[:-1, :] == v[1:, :]) & (v[:-1, :] > 0)
    src = np.concatenate([idx[:, :-1][h], idx[:-1, :][w]])
    dst = np.concatenate([idx[:, 1:][h], idx[1:, :][w]])
    g = sparse.coo_matrix((np.ones(src.size), (src, dst)), shape=(rows * cols,) * 2)
    _, lab = csgraph.connected_components(g, directed=False)
    active = vec_id > 0
    region = np.zeros(rows * cols, dtype=np.int64)
    # renumber components touching active pixels as 1..n in raster order
    _, first = np.unique(lab[active], return_inverse=True)
    region[active] = first.ravel() + 1
    return region, int(first.max()) + 1 if active.any() else 0


def correct_closure(unwrapped, network: IfgNetwork, spatial: bool = True) -> ClosureCorrection:
    """Remove integer-cycle unwrapping errors that break triplet closure.

    Per pixel, a greedy search subtracts one cycle at a time from the
    interferogram that most reduces the total absolute closure. Ties, e.g. a
    lone triplet where all three interferograms explain the misclosure
    equally, are broken by boundary evidence: the interferogram that jumps
    by a whole cycle across the edge of the misclosed region is the one
    corrected. Pixels left inconsistent are reported and left unchanged.
    """
    phase = np.asarray(unwrapped, dtype=np.float64)
    if phase.ndim != 3 or phase.shape[0] != network.n_pairs:
        raise ValueError(f"expected ({network.n_pairs}, rows, cols) stack, got {phase.shape}")
    C = network.closure_matrix()
    if C.shape[0] == 0:
        raise ValueError("network has no closed triplet")
    rows, cols = phase.shape[1:]
    flat = phase.reshape(phase.shape[0], -1)
    finite = np.all(np.isfinite(flat), axis=0)
    clos = np.zeros((C.shape[0], flat.shape[1]), dtype=np.int64)
    clos[:, finite] = np.rint((C @ flat[:, finite]) / TWO_PI).astype(np.int64)
    bad = np.flatnonzero(np.any(clos != 0, axis=0))
    cycles = np.zeros_like(flat, dtype=np.int64)
    unresolved = np.zeros(flat.shape[1], dtype=bool)
    if bad.size:
        uniq, inverse = np.unique(clos[:, bad].T, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        vec_id = np.zeros(flat.shape[1], dtype=np.int64)
        vec_id[bad] = inverse + 1
        region, n_regions = _label_regions(vec_id, rows, cols)
        region2d = region.reshape(rows, cols)
        evidence = (_boundary_evidence(phase, region2d, n_regions) if spatial
                    else np.zeros((n_regions + 1, phase.shape[0])))
        region_vec = np.zeros(n_regions + 1, dtype=np.int64)
        region_vec[region[bad]] = vec_id[bad]
        max_steps = 4 * int(np.abs(uniq).sum(axis=1).max()) + 4
        for reg in range(1, n_regions + 1):
            k = _greedy(uniq[region_vec[reg] - 1], C, evidence[reg], max_steps)
            pix = region == reg
            if k is None:
                unresolved[pix] = True
            else:
                cycles[:, pix] = k[:, None]
    corrected = (flat - TWO_PI * cycles).reshape(phase.shape)
    return ClosureCorrection(corrected=corrected, cycles=cycles.reshape(phase.shape),
                             n_corrections=int(np.count_nonzero(cycles)),
                             unresolved=unresolved.reshape(rows, cols))
