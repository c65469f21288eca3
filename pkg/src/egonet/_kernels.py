"""Numba inner loops for convolution, pooling, and scanline stereo.

All kernels are compiled with fastmath disabled so floating-point results
are reproducible bit-for-bit. Parallel loops only split work across
independent output elements; the accumulation order within each element
is fixed, so results do not depend on the thread count.
"""

import os

# Prefer a threading layer that is quiet and safe with forked workers.
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

import numpy as np
from numba import njit, prange, set_num_threads


def apply_thread_cap():
    """Honor the EGONET_THREADS env var, if set."""
    cap = os.environ.get("EGONET_THREADS")
    if cap:
        set_num_threads(max(1, int(cap)))


@njit(cache=True, parallel=True, fastmath=False)
def conv2d_forward(xp, w, b, stride, dilation, out):
    # xp is the zero-padded input. Each output element accumulates
    # bias first, then taps in (c, kh, kw) order: the same order as the
    # naive direct-sum definition, so results match it bit-for-bit.
    # The stride-1 branch keeps the inner loop unit-stride so it can be
    # vectorized; both branches accumulate in the same order.
    B, C, HP, WP = xp.shape
    O, _, KH, KW = w.shape
    _, _, OH, OW = out.shape
    for bo in prange(B * O):
        bi = bo // O
        o = bo % O
        for oh in range(OH):
            ih0 = oh * stride
            acc = np.empty(OW, dtype=out.dtype)
            for ow in range(OW):
                acc[ow] = b[o]
            for c in range(C):
                for kh in range(KH):
                    ih = ih0 + kh * dilation
                    for kw in range(KW):
                        wv = w[o, c, kh, kw]
                        base = kw * dilation
                        if stride == 1:
                            row = xp[bi, c, ih, base:base + OW]
                            for ow in range(OW):
                                acc[ow] += row[ow] * wv
                        else:
                            for ow in range(OW):
                                acc[ow] += xp[bi, c, ih, base + ow * stride] * wv
            for ow in range(OW):
                out[bi, o, oh, ow] = acc[ow]


@njit(cache=True, parallel=True, fastmath=False)
def conv2d_backward_input(dy, w, stride, dilation, dxp):
    # Gather form over padded-input coordinates: race-free under prange.
    B, O, OH, OW = dy.shape
    _, C, KH, KW = w.shape
    _, _, HP, WP = dxp.shape
    for bc in prange(B * C):
        bi = bc // C
        c = bc % C
        for ihp in range(HP):
            for iwp in range(WP):
                acc = 0.0
                for kh in range(KH):
                    th = ihp - kh * dilation
                    if th < 0 or th % stride != 0:
                        continue
                    oh = th // stride
                    if oh >= OH:
                        continue
                    for kw in range(KW):
                        tw = iwp - kw * dilation
                        if tw < 0 or tw % stride != 0:
                            continue
                        ow = tw // stride
                        if ow >= OW:
                            continue
                        for o in range(O):
                            acc += w[o, c, kh, kw] * dy[bi, o, oh, ow]
                dxp[bi, c, ihp, iwp] = acc


@njit(cache=True, parallel=True, fastmath=False)
def conv2d_backward_weight(xp, dy, stride, dilation, dw):
    B, O, OH, OW = dy.shape
    _, C, KH, KW = dw.shape
    for oc in prange(O * C):
        o = oc // C
        c = oc % C
        lane = np.empty(OW, dtype=dw.dtype)
        for kh in range(KH):
            for kw in range(KW):
                for ow in range(OW):
                    lane[ow] = 0.0
                base = kw * dilation
                for bi in range(B):
                    for oh in range(OH):
                        ih = oh * stride + kh * dilation
                        if stride == 1:
                            xrow = xp[bi, c, ih, base:base + OW]
                            yrow = dy[bi, o, oh]
                            for ow in range(OW):
                                lane[ow] += xrow[ow] * yrow[ow]
                        else:
                            for ow in range(OW):
                                lane[ow] += xp[bi, c, ih, base + ow * stride] * dy[bi, o, oh, ow]
                acc = 0.0
                for ow in range(OW):
                    acc += lane[ow]
                dw[o, c, kh, kw] = acc


@njit(cache=True, parallel=True, fastmath=False)
def maxpool2d_forward(x, k, stride, pad, out, argmax):
    # Padding is implicit -inf; windows always overlap the input (pad < k
    # is validated by the caller), so outputs stay finite. Ties go to the
    # first element in scan order.
    B, C, H, W = x.shape
    _, _, OH, OW = out.shape
    for bc in prange(B * C):
        bi = bc // C
        c = bc % C
        for oh in range(OH):
            for ow in range(OW):
                best = -np.inf
                besti = -1
                for kh in range(k):
                    ih = oh * stride - pad + kh
                    if ih < 0 or ih >= H:
                        continue
                    for kw in range(k):
                        iw = ow * stride - pad + kw
                        if iw < 0 or iw >= W:
                            continue
                        v = x[bi, c, ih, iw]
                        if v > best:
                            best = v
                            besti = ih * W + iw
                out[bi, c, oh, ow] = best
                argmax[bi, c, oh, ow] = besti


@njit(cache=True, parallel=True, fastmath=False)
def maxpool2d_backward(dy, argmax, W, dx):
    B, C, OH, OW = dy.shape
    for bc in prange(B * C):
        bi = bc // C
        c = bc % C
        for oh in range(OH):
            for ow in range(OW):
                idx = argmax[bi, c, oh, ow]
                dx[bi, c, idx // W, idx % W] += dy[bi, c, oh, ow]


# Moves in the scanline alignment, in tie-break preference order.
_MATCH, _ROCC, _LOCC = 0, 1, 2


@njit(cache=True, fastmath=False)
def scanline_dp_row(left, right, max_disp, occ_cost, disp, valid):
    """Three-state alignment of one rectified scanline pair.

    States are indexed by (i, d) where i left pixels have been consumed
    and d = i - j is the current disparity, 0 <= d <= max_disp. Moves:
    match (consume one pixel from each row, cost |L-R|), left occlusion
    (consume a left pixel, cost occ), right occlusion (consume a right
    pixel, cost occ). Returns the optimal total cost; matched left
    pixels get their disparity, occluded ones are marked invalid.
    """
    W = left.shape[0]
    D = max_disp + 1
    INF = np.inf
    cost = np.full((W + 1, D), INF)
    move = np.full((W + 1, D), -1, dtype=np.int8)
    cost[0, 0] = 0.0
    for i in range(W + 1):
        # Within a column, right-occlusion flows from larger d to smaller,
        # so iterate d downward.
        for d in range(min(i, D - 1), -1, -1):
            best = cost[i, d]
            mv = move[i, d]
            if i >= 1 and d <= i - 1:
                j = i - d  # right pixel consumed by a match is j-1 = i-1-d
                if j >= 1 and j - 1 < W:
                    c = cost[i - 1, d] + abs(left[i - 1] - right[j - 1])
                    if c < best:
                        best, mv = c, _MATCH
            if d + 1 < D:
                c = cost[i, d + 1] + occ_cost
                if c < best:
                    best, mv = c, _ROCC
            if i >= 1 and d >= 1:
                c = cost[i - 1, d - 1] + occ_cost
                if c < best:
                    best, mv = c, _LOCC
            cost[i, d] = best
            move[i, d] = mv
    # Backtrack from full consumption of both rows (d = 0 at i = W).
    i, d = W, 0
    while i > 0 or d > 0:
        mv = move[i, d]
        if mv == _MATCH:
            disp[i - 1] = d
            valid[i - 1] = True
            i -= 1
        elif mv == _ROCC:
            d += 1
        else:  # _LOCC
            disp[i - 1] = -1
            valid[i - 1] = False
            i -= 1
            d -= 1
    return cost[W, 0]


@njit(cache=True, parallel=True, fastmath=False)
def scanline_dp_image(left, right, max_disp, occ_cost, disp, valid, costs):
    H = left.shape[0]
    for y in prange(H):
        costs[y] = scanline_dp_row(left[y], right[y], max_disp, occ_cost,
                                   disp[y], valid[y])
