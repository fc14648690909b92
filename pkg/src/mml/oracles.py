"""Brute-force reference implementations in plain Python.

Nothing here uses numpy's arithmetic or linear algebra: matrices are lists of rows,
loops are explicit, inverses use Gauss-Jordan elimination and matrix square
roots come from a cyclic Jacobi eigensolver. These are slow and meant for
checking the vectorized code on small inputs.
"""

import math

import numpy as np


def _tolist(x):
    # conversion only; all arithmetic below is plain Python
    return np.asarray(x, dtype=float).tolist()


def _column(mat, j):
    return [row[j] for row in mat]


def _cos(u, v, eps=1e-12):
    nu = math.sqrt(sum(x * x for x in u))
    nv = math.sqrt(sum(x * x for x in v))
    if nu < eps or nv < eps:
        return 0.0
    return sum(a * b for a, b in zip(u, v)) / (nu * nv)


def cosine_matrix(a, b):
    a, b = _tolist(a), _tolist(b)
    p, q = len(a[0]), len(b[0])
    return [[_cos(_column(a, i), _column(b, j)) for j in range(q)] for i in range(p)]


def row_topk_sum(m, k):
    return sum(sum(sorted(row, reverse=True)[:k]) for row in _tolist(m))


def mean_vector(desc):
    desc = _tolist(desc)
    n = len(desc[0])
    return [sum(row) / n for row in desc]


def covariance(desc, shrinkage=0.0):
    desc = _tolist(desc)
    d, n = len(desc), len(desc[0])
    mu = mean_vector(desc)
    out = [[0.0] * d for _ in range(d)]
    for i in range(d):
        for j in range(d):
            out[i][j] = sum((desc[i][t] - mu[i]) * (desc[j][t] - mu[j]) for t in range(n)) / n
        out[i][i] += shrinkage
    return out


def pixel_descriptors(maps):
    """Channel fibers of ``maps`` (sequence of C x H x W nested lists), position-major."""
    cols = []
    for fm in maps:
        fm = _tolist(fm)
        c, h, w = len(fm), len(fm[0]), len(fm[0][0])
        for y in range(h):
            for x in range(w):
                cols.append([fm[ch][y][x] for ch in range(c)])
    return cols


def part_descriptors(maps):
    """Flattened channel planes of ``maps``, channel-major."""
    cols = []
    for fm in maps:
        for plane in _tolist(fm):
            cols.append([v for row in plane for v in row])
    return cols


def _score(query_cols, support_cols, k):
    total = 0.0
    for u in query_cols:
        sims = sorted((_cos(u, v) for v in support_cols), reverse=True)
        total += sum(sims[:k])
    return total


def part_score(query_map, support_maps, xi):
    return _score(part_descriptors([query_map]), part_descriptors(support_maps), xi)


def pixel_score(query_map, support_maps, k):
    return _score(pixel_descriptors([query_map]), pixel_descriptors(support_maps), k)


def gaussian(cols, shrinkage):
    """Mean and covariance of a list of descriptor vectors."""
    d = len(cols[0])
    as_rows = [[c[i] for c in cols] for i in range(d)]
    return mean_vector(as_rows), covariance(as_rows, shrinkage)


def inverse(a):
    """Gauss-Jordan inverse with partial pivoting."""
    n = len(a)
    aug = [list(map(float, row)) + [1.0 if i == j else 0.0 for j in range(n)]
           for i, row in enumerate(_tolist(a))]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(aug[r][col]))
        aug[col], aug[piv] = aug[piv], aug[col]
        p = aug[col][col]
        aug[col] = [v / p for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0.0:
                f = aug[r][col]
                aug[r] = [vr - f * vc for vr, vc in zip(aug[r], aug[col])]
    return [row[n:] for row in aug]


def log_det(a):
    """log |det a| by Gaussian elimination with partial pivoting."""
    m = [list(map(float, row)) for row in _tolist(a)]
    n = len(m)
    total = 0.0
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(m[r][col]))
        m[col], m[piv] = m[piv], m[col]
        p = m[col][col]
        total += math.log(abs(p))
        for r in range(col + 1, n):
            f = m[r][col] / p
            m[r] = [vr - f * vc for vr, vc in zip(m[r], m[col])]
    return total


def matmul(a, b):
    a, b = _tolist(a), _tolist(b)
    return [[sum(a[i][t] * b[t][j] for t in range(len(b))) for j in range(len(b[0]))]
            for i in range(len(a))]


def trace(a):
    return sum(_tolist(a)[i][i] for i in range(len(a)))


def kl_divergence(mu_s, sig_s, mu_q, sig_q):
    """KL(S || Q) assembled term by term."""
    c = len(mu_q)
    inv_q = inverse(sig_q)
    tr = trace(matmul(inv_q, sig_s))
    d = [a - b for a, b in zip(_tolist(mu_q), _tolist(mu_s))]
    maha = sum(d[i] * inv_q[i][j] * d[j] for i in range(c) for j in range(c))
    return 0.5 * (tr + log_det(sig_q) - log_det(sig_s) + maha - c)


def jacobi_eigen(a, tol=1e-15, max_sweeps=100):
    """Eigenvalues and eigenvectors (as columns) of a symmetric matrix."""
    a = [list(map(float, row)) for row in _tolist(a)]
    n = len(a)
    v = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    for _ in range(max_sweeps):
        off = sum(a[i][j] ** 2 for i in range(n) for j in range(n) if i != j)
        scale = sum(a[i][i] ** 2 for i in range(n)) or 1.0
        if off <= tol * tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p][q] == 0.0:
                    continue
                theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                cs = 1.0 / math.sqrt(t * t + 1.0)
                sn = t * cs
                for k in range(n):
                    akp, akq = a[k][p], a[k][q]
                    a[k][p] = cs * akp - sn * akq
                    a[k][q] = sn * akp + cs * akq
                for k in range(n):
                    apk, aqk = a[p][k], a[q][k]
                    a[p][k] = cs * apk - sn * aqk
                    a[q][k] = sn * apk + cs * aqk
                for k in range(n):
                    vkp, vkq = v[k][p], v[k][q]
                    v[k][p] = cs * vkp - sn * vkq
                    v[k][q] = sn * vkp + cs * vkq
    return [a[i][i] for i in range(n)], v


def sqrtm(a):
    vals, vecs = jacobi_eigen(a)
    n = len(vals)
    roots = [math.sqrt(max(x, 0.0)) for x in vals]
    return [[sum(vecs[i][t] * roots[t] * vecs[j][t] for t in range(n)) for j in range(n)]
            for i in range(n)]


def wasserstein_exact(mu_a, sig_a, mu_b, sig_b):
    root_a = sqrtm(sig_a)
    cross = sqrtm(matmul(matmul(root_a, sig_b), root_a))
    gap = sum((x - y) ** 2 for x, y in zip(_tolist(mu_a), _tolist(mu_b)))
    return gap + trace(sig_a) + trace(sig_b) - 2.0 * trace(cross)


def wasserstein_approx(mu_a, sig_a, mu_b, sig_b):
    sig_a, sig_b = _tolist(sig_a), _tolist(sig_b)
    gap = sum((x - y) ** 2 for x, y in zip(_tolist(mu_a), _tolist(mu_b)))
    n = len(sig_a)
    return gap + sum((sig_a[i][j] - sig_b[i][j]) ** 2 for i in range(n) for j in range(n))


def fuse(per_class, w, b, mean, var, eps=1e-8):
    """Standardize each branch with (mean, var), combine, softmax. Returns (scores, probs)."""
    signs = (1.0, 1.0, -1.0)
    scores = []
    for row in _tolist(per_class):
        s = sum(b)
        for i in range(3):
            s += signs[i] * w[i] * (row[i] - mean[i]) / math.sqrt(max(var[i], eps))
        scores.append(s)
    top = max(scores)
    exps = [math.exp(s - top) for s in scores]
    total = sum(exps)
    return scores, [e / total for e in exps]


def batch_stats(per_class):
    rows = _tolist(per_class)
    n = len(rows)
    mean = [sum(r[i] for r in rows) / n for i in range(3)]
    var = [sum((r[i] - mean[i]) ** 2 for r in rows) / n for i in range(3)]
    return mean, var
