"""Pure numpy/Python versions of the compiled kernels in ``_ckernels.pyx``.

Loop order and floating-point expressions mirror the compiled code, so the
SLIC and component kernels agree exactly. The Jacobi stopping test sums in a
different order and may differ from the compiled result in the last bits.
"""
import numpy as np


def jacobi_eigh(a_in, tol, max_sweeps):
    a = np.array(a_in, dtype=np.float64, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    offdiag = ~np.eye(n, dtype=bool)
    sweep = 0
    while True:
        off = np.sqrt(np.sum((a * a)[offdiag]))
        if off < tol or sweep >= max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + np.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        sweep += 1
    return np.diag(a).copy(), v, sweep


def slic_assign(lab, centers, step, compactness):
    h, w = lab.shape[:2]
    labels = np.full((h, w), -1, dtype=np.int64)
    dist = np.full((h, w), np.inf)
    weight = (compactness / step) * (compactness / step)
    for k, (cl, ca, cb, cy, cx) in enumerate(centers):
        y0, y1 = int(max(0.0, cy - step)), int(min(float(h), cy + step + 1.0))
        x0, x1 = int(max(0.0, cx - step)), int(min(float(w), cx + step + 1.0))
        win = lab[y0:y1, x0:x1]
        dl = win[..., 0] - cl
        da = win[..., 1] - ca
        db = win[..., 2] - cb
        dy = (np.arange(y0, y1, dtype=np.float64) - cy)[:, None]
        dx = (np.arange(x0, x1, dtype=np.float64) - cx)[None, :]
        d = (dl * dl + da * da + db * db) + (dy * dy + dx * dx) * weight
        better = d < dist[y0:y1, x0:x1]
        dist[y0:y1, x0:x1][better] = d[better]
        labels[y0:y1, x0:x1][better] = k
    return labels, dist


def label_components(labels):
    h, w = labels.shape
    comp = np.full((h, w), -1, dtype=np.int64)
    flat_lab = labels.ravel().tolist()
    flat = comp.ravel()
    cur = 0
    for start in range(h * w):
        if flat[start] >= 0:
            continue
        lbl = flat_lab[start]
        flat[start] = cur
        stack = [start]
        while stack:
            idx = stack.pop()
            cy, cx = divmod(idx, w)
            for nb, ok in ((idx - w, cy > 0), (idx + w, cy < h - 1),
                           (idx - 1, cx > 0), (idx + 1, cx < w - 1)):
                if ok and flat[nb] < 0 and flat_lab[nb] == lbl:
                    flat[nb] = cur
                    stack.append(nb)
        cur += 1
    return comp, cur
