"""Time and tensor-memory cost of Jacobian norm computations.

Three paths are compared on a ``q -> p -> p -> p`` ReLU network:

* ``spectral``: matrix-free power iteration, ``n`` iterations;
* ``frobenius``: random projections, ``n`` projections;
* ``explicit``: the full Jacobian assembled by a batched reverse sweep, then
  its SVD. Skipped when ``p * q`` exceeds the explicit-Jacobian guard.

``peak_bytes`` counts tensor buffers allocated while the norm is computed
(parameters, which exist beforehand, are excluded).
"""
import csv
import io
import time

import numpy as np

from .autodiff import Network, memory_meter, vjp_tensor
from .autodiff.network import MAX_JACOBIAN_ENTRIES
from .jacnorm import frob_sq, spectral_norms

BENCH_HEADER = ("method", "p", "q", "n", "wall_time_s", "peak_bytes")
METHODS = ("spectral", "frobenius", "explicit")


def parse_sizes(text):
    """``"784:784,256:64"`` -> ``[(784, 784), (256, 64)]``; empty text gives ``[]``."""
    sizes = []
    for item in filter(None, (s.strip() for s in (text or "").split(","))):
        try:
            p, q = (int(v) for v in item.split(":"))
        except ValueError:
            raise ValueError(f"bad size {item!r}; expected p:q") from None
        if p < 1 or q < 1:
            raise ValueError(f"sizes must be positive, got {item!r}")
        sizes.append((p, q))
    return sizes


def _explicit(net, Y):
    # one Jacobian at a time; the batch only repeats the work
    sig = np.empty(len(Y))
    p = net.output_dim
    for i, y in enumerate(Y):
        J = vjp_tensor(net, np.tile(y, (p, 1)), np.eye(p))
        sig[i] = np.linalg.svd(J.data, compute_uv=False)[0]
    return sig


def measure_once(method, net, Y, n, seed=0):
    """``(wall_time_s, peak_bytes)`` of one norm computation."""
    rng = np.random.default_rng(seed)
    with memory_meter() as mem:
        t0 = time.perf_counter()
        if method == "spectral":
            spectral_norms(net, Y, None, n, rng)
        elif method == "frobenius":
            frob_sq(net, Y, None, n, rng)
        elif method == "explicit":
            _explicit(net, Y)
        else:
            raise ValueError(f"unknown method {method!r}")
        dt = time.perf_counter() - t0
    return dt, mem.peak_bytes


def run_bench(sizes, methods=METHODS, n_values=(1, 2, 3, 4), batch=1, repeats=5, seed=0):
    """Rows of ``(method, p, q, n, wall_time_s, peak_bytes)``; time is the median over repeats.

    The explicit path has no iteration count and reports ``n = 0``; above
    the size guard it yields a single ``"skipped: memory"`` row.
    """
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
    rows = []
    for p, q in sizes:
        net = Network.reconstruction(q, p, rng=seed)
        Y = np.random.default_rng(seed).standard_normal((batch, q))
        for m in methods:
            if m == "explicit":
                if p * q > MAX_JACOBIAN_ENTRIES:
                    rows.append((m, p, q, 0, "skipped: memory", "skipped: memory"))
                    continue
                ns = (0,)
            else:
                ns = n_values
            for n in ns:
                runs = [measure_once(m, net, Y, n, seed) for _ in range(repeats)]
                t = float(np.median([r[0] for r in runs]))
                peak = max(r[1] for r in runs)
                rows.append((m, p, q, n, t, peak))
    return rows


def bench_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(BENCH_HEADER)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def linear_fit_r2(x, y):
    """Coefficient of determination of the least-squares line through ``(x, y)``."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss_tot = np.sum((y - y.mean()) ** 2)
    return 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
