"""Priority-flood kernel for the watershed transform.

Separate module so the numba compilation cost is paid only when the
watershed is actually used. The heap stores (relief value, insertion
counter) pairs, giving strict FIFO order among equal relief values, which
pins down the label assignment deterministically.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# neighbor scan order: row-major over the 8-neighborhood
_DY = np.array([-1, -1, -1, 0, 0, 1, 1, 1], dtype=np.int64)
_DX = np.array([-1, 0, 1, -1, 1, -1, 0, 1], dtype=np.int64)


@njit(cache=True)
def _sift_up(keys, cnts, idxs, lbls, pos):
    while pos > 0:
        parent = (pos - 1) >> 1
        if (keys[pos] < keys[parent]) or (
            keys[pos] == keys[parent] and cnts[pos] < cnts[parent]
        ):
            keys[pos], keys[parent] = keys[parent], keys[pos]
            cnts[pos], cnts[parent] = cnts[parent], cnts[pos]
            idxs[pos], idxs[parent] = idxs[parent], idxs[pos]
            lbls[pos], lbls[parent] = lbls[parent], lbls[pos]
            pos = parent
        else:
            break


@njit(cache=True)
def _sift_down(keys, cnts, idxs, lbls, size):
    pos = 0
    while True:
        left = 2 * pos + 1
        if left >= size:
            break
        right = left + 1
        best = left
        if right < size and (
            keys[right] < keys[left]
            or (keys[right] == keys[left] and cnts[right] < cnts[left])
        ):
            best = right
        if (keys[best] < keys[pos]) or (
            keys[best] == keys[pos] and cnts[best] < cnts[pos]
        ):
            keys[pos], keys[best] = keys[best], keys[pos]
            cnts[pos], cnts[best] = cnts[best], cnts[pos]
            idxs[pos], idxs[best] = idxs[best], idxs[pos]
            lbls[pos], lbls[best] = lbls[best], lbls[pos]
            pos = best
        else:
            break


@njit(cache=True)
def _flood(relief, labels, dy, dx):
    h, w = relief.shape
    n = h * w
    out = labels.copy()
    queued = np.zeros(n, dtype=np.bool_)

    cap = n + 8
    keys = np.empty(cap, dtype=np.float64)
    cnts = np.empty(cap, dtype=np.int64)
    idxs = np.empty(cap, dtype=np.int64)
    lbls = np.empty(cap, dtype=np.int32)
    size = 0
    counter = 0

    # seed with the unlabeled neighbors of marker pixels, raster order
    for y in range(h):
        for x in range(w):
            lab = out[y, x]
            if lab == 0:
                continue
            for k in range(8):
                ny = y + dy[k]
                nx = x + dx[k]
                if ny < 0 or ny >= h or nx < 0 or nx >= w:
                    continue
                if out[ny, nx] != 0:
                    continue
                p = ny * w + nx
                if queued[p]:
                    continue
                queued[p] = True
                keys[size] = relief[ny, nx]
                cnts[size] = counter
                idxs[size] = p
                lbls[size] = lab
                _sift_up(keys, cnts, idxs, lbls, size)
                size += 1
                counter += 1

    while size > 0:
        p = idxs[0]
        lab = lbls[0]
        size -= 1
        keys[0] = keys[size]
        cnts[0] = cnts[size]
        idxs[0] = idxs[size]
        lbls[0] = lbls[size]
        _sift_down(keys, cnts, idxs, lbls, size)

        y = p // w
        x = p % w
        if out[y, x] != 0:
            continue
        out[y, x] = lab
        for k in range(8):
            ny = y + dy[k]
            nx = x + dx[k]
            if ny < 0 or ny >= h or nx < 0 or nx >= w:
                continue
            if out[ny, nx] != 0:
                continue
            q = ny * w + nx
            if queued[q]:
                continue
            queued[q] = True
            keys[size] = relief[ny, nx]
            cnts[size] = counter
            idxs[size] = q
            lbls[size] = lab
            _sift_up(keys, cnts, idxs, lbls, size)
            size += 1
            counter += 1
    return out


def flood_from_markers(relief: np.ndarray, markers: np.ndarray) -> np.ndarray:
    """Flood `relief` from labeled `markers`; returns the full label image."""
    return _flood(relief, markers, _DY, _DX)
