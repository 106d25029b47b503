"""Independent nested-loop implementations of the quality indices."""
import math

import numpy as np


def loop_rmse(x, r):
    total, n = 0.0, 0
    for v, w in zip(x.ravel(), r.ravel()):
        total += (v - w) ** 2
        n += 1
    return math.sqrt(total / n)


def loop_sa(x, r):
    c, h, w = x.shape
    angles = []
    for i in range(h):
        for j in range(w):
            dot = sum(x[b, i, j] * r[b, i, j] for b in range(c))
            nx = math.sqrt(sum(x[b, i, j] ** 2 for b in range(c)))
            nr = math.sqrt(sum(r[b, i, j] ** 2 for b in range(c)))
            angles.append(math.degrees(math.acos(max(-1.0, min(1.0, dot / (nx * nr))))))
    return sum(angles) / len(angles)


def loop_ergas(x, r, ratio):
    c = x.shape[0]
    acc = 0.0
    for b in range(c):
        mean = sum(r[b].ravel()) / r[b].size
        acc += (loop_rmse(x[b], r[b]) / mean) ** 2
    return 100.0 / ratio * math.sqrt(acc / c)


def loop_laplacian(band):
    h, w = band.shape
    out = np.zeros((h - 2, w - 2))
    for i in range(1, h - 1):
        for j in range(1, w - 1):
            s = 0.0
            for a in (-1, 0, 1):
                for b in (-1, 0, 1):
                    s += (8.0 if a == b == 0 else -1.0) * band[i + a, j + b]
            out[i - 1, j - 1] = s
    return out


def loop_pearson(a, b):
    a, b = list(a.ravel()), list(b.ravel())
    ma, mb = sum(a) / len(a), sum(b) / len(b)
    cov = sum((u - ma) * (v - mb) for u, v in zip(a, b))
    va = sum((u - ma) ** 2 for u in a)
    vb = sum((v - mb) ** 2 for v in b)
    return cov / math.sqrt(va * vb)


def loop_scc(x, r):
    vals = [loop_pearson(loop_laplacian(a), loop_laplacian(b)) for a, b in zip(x, r)]
    return sum(vals) / len(vals)


def scalar_q(a, b):
    """Universal image quality index of two whole images, written out."""
    a, b = list(a.ravel()), list(b.ravel())
    n = len(a)
    ma, mb = sum(a) / n, sum(b) / n
    va = sum((u - ma) ** 2 for u in a) / n
    vb = sum((v - mb) ** 2 for v in b) / n
    cov = sum((u - ma) * (v - mb) for u, v in zip(a, b)) / n
    return 4 * cov * ma * mb / ((va + vb) * (ma ** 2 + mb ** 2))


def blockwise_q(a, b, block):
    h, w = a.shape
    vals = [scalar_q(a[i:i + block, j:j + block], b[i:i + block, j:j + block])
            for i in range(0, h - block + 1, block) for j in range(0, w - block + 1, block)]
    return sum(vals) / len(vals)
