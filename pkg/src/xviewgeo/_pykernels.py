"""Pure-Python/NumPy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np

FLUSH = 1e-300


def replicator_run(A, x0, max_iter, tol, trace, support_eps=1e-4):
    A = np.asarray(A, dtype=float)
    x = np.array(x0, dtype=float)
    payoffs = [] if trace else None
    sizes = [] if trace else None
    steps = 0
    converged = zero = False
    max_dev = 0.0
    for it in range(max_iter + 1):
        ax = A @ x
        p = float(x @ ax)
        if trace:
            payoffs.append(p)
            sizes.append(int(np.count_nonzero(x > support_eps)))
        if it == max_iter:
            break
        if p <= 0.0:
            zero = True
            break
        xn = x * ax / p
        xn[xn < FLUSH] = 0.0
        diff = float(np.abs(xn - x).sum())
        max_dev = max(max_dev, abs(float(xn.sum()) - 1.0))
        x = xn
        steps += 1
        if diff < tol:
            converged = True
            if trace:
                payoffs.append(float(x @ (A @ x)))
                sizes.append(int(np.count_nonzero(x > support_eps)))
            break
    if trace:
        payoffs = np.array(payoffs)
        sizes = np.array(sizes, dtype=np.intp)
    return x, steps, converged, payoffs, sizes, max_dev, zero


def gmcp_enumerate(A, offsets, nodes):
    A = np.asarray(A, dtype=float)
    nc = len(offsets) - 1
    sizes = [int(offsets[c + 1] - offsets[c]) for c in range(nc)]
    members = [[int(v) for v in nodes[offsets[c]:offsets[c + 1]]] for c in range(nc)]
    rows = A.tolist()
    idx = [-1] * nc
    chosen = [0] * nc
    partial = [0.0] * (nc + 1)
    best, best_sel, count = -1.0e308, [0] * nc, 0
    depth = 0
    while depth >= 0:
        idx[depth] += 1
        if idx[depth] >= sizes[depth]:
            idx[depth] = -1
            depth -= 1
            continue
        node = members[depth][idx[depth]]
        acc = partial[depth]
        for c in range(depth):
            acc += rows[chosen[c]][node]
        chosen[depth] = node
        partial[depth + 1] = acc
        if depth == nc - 1:
            count += 1
            if acc > best:
                best = acc
                best_sel = idx[:]
        else:
            depth += 1
    return np.array(best_sel, dtype=np.intp), best, count
