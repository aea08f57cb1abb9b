"""Pure-numpy implementations of the polar coding kernels.

Bit-compatible with the compiled extension (same decision rules, same
deterministic path-metric tie-breaking); used as the import-time fallback
when the extension is unavailable or when MDPOLAR_PURE=1 is set.
"""

import numpy as np


def encode(u):
    """Polar transform x = u * F^(kron n) over GF(2), natural bit order."""
    x = np.array(u, dtype=np.uint8)
    size = x.shape[0]
    while size > 1:
        half = size >> 1
        v = x.reshape(-1, size)
        v[:, :half] ^= v[:, half:]
        size = half
    return x


def f_minsum(a, b):
    """Check-node LLR combine: sign(a)*sign(b)*min(|a|,|b|)."""
    return np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b))


def g_combine(a, b, c):
    """Variable-node LLR combine: b + a if partial sum c == 0 else b - a."""
    return np.where(c == 0, b + a, b - a)


def sc_decode(llrs, frozen):
    """Successive-cancellation decode; returns the full u-domain vector.

    Frozen positions decode to 0; at information positions LLR >= 0
    decides bit 0.
    """
    llrs = np.asarray(llrs, dtype=np.float64)
    frozen = np.asarray(frozen, dtype=np.uint8)
    u_hat = np.zeros(llrs.shape[0], dtype=np.uint8)

    def rec(lv, lo):
        size = lv.shape[0]
        if size == 1:
            bit = 0 if frozen[lo] else int(lv[0] < 0)
            u_hat[lo] = bit
            return np.array([bit], dtype=np.uint8)
        half = size >> 1
        a, b = lv[:half], lv[half:]
        c_left = rec(f_minsum(a, b), lo)
        c_right = rec(g_combine(a, b, c_left), lo + half)
        return np.concatenate([c_left ^ c_right, c_right])

    rec(llrs, 0)
    return u_hat


def scl_decode(llrs, frozen, list_size):
    """Successive-cancellation list decode.

    Returns ``(candidates, metrics)``: up to ``list_size`` u-domain
    candidates sorted by ascending path metric.  The metric is the usual
    penalty form (sum of |LLR| over decisions taken against the LLR sign).
    Ties break deterministically: natural decisions before flipped ones,
    lower-index parent paths first.
    """
    llrs = np.asarray(llrs, dtype=np.float64)
    frozen = np.asarray(frozen, dtype=np.uint8)
    n_block = llrs.shape[0]
    n = n_block.bit_length() - 1
    lsz = int(list_size)

    llr = np.zeros((lsz, n + 1, n_block))
    llr[:, 0, :] = llrs
    ucap = np.zeros((lsz, n + 1, n_block), dtype=np.uint8)
    metrics = np.full(lsz, np.inf)
    metrics[0] = 0.0
    node_state = np.zeros(2 * n_block - 1, dtype=np.uint8)

    depth = 0
    node = 0
    while True:
        if depth == n:
            dm = llr[:, n, node]
            if frozen[node]:
                ucap[:, n, node] = 0
                metrics = metrics + np.abs(dm) * (dm < 0)
            else:
                natural = (dm < 0).astype(np.uint8)
                cand = np.concatenate([metrics, metrics + np.abs(dm)])
                keep = np.argsort(cand, kind="stable")[:lsz]
                src = keep % lsz
                flip = (keep >= lsz).astype(np.uint8)
                llr = llr[src]
                ucap = ucap[src]
                metrics = cand[keep]
                ucap[:, n, node] = natural[src] ^ flip
            if node == n_block - 1:
                break
            node >>= 1
            depth -= 1
        else:
            size = n_block >> depth
            half = size >> 1
            seg = slice(size * node, size * (node + 1))
            state = node_state[(1 << depth) - 1 + node]
            if state == 0:
                a = llr[:, depth, seg.start:seg.start + half]
                b = llr[:, depth, seg.start + half:seg.stop]
                node_state[(1 << depth) - 1 + node] = 1
                node = 2 * node
                depth += 1
                llr[:, depth, half * node:half * (node + 1)] = f_minsum(a, b)
            elif state == 1:
                a = llr[:, depth, seg.start:seg.start + half]
                b = llr[:, depth, seg.start + half:seg.stop]
                c_left = ucap[:, depth + 1, half * (2 * node):half * (2 * node + 1)]
                node_state[(1 << depth) - 1 + node] = 2
                node = 2 * node + 1
                depth += 1
                llr[:, depth, half * node:half * (node + 1)] = g_combine(a, b, c_left)
            else:
                c_left = ucap[:, depth + 1, half * (2 * node):half * (2 * node + 1)]
                c_right = ucap[:, depth + 1, half * (2 * node + 1):half * (2 * node + 2)]
                ucap[:, depth, seg.start:seg.start + half] = c_left ^ c_right
                ucap[:, depth, seg.start + half:seg.stop] = c_right
                node >>= 1
                depth -= 1

    order = np.argsort(metrics, kind="stable")
    return ucap[order, n, :], metrics[order]
