"""Independent reference implementations used only by the tests.

Everything here is deliberately naive: pure-python loops, exact summation
via math.fsum, direct evaluation of every configuration energy.  Nothing is
shared with the package's enumeration engines, so agreement is a genuine
two-route check.
"""

import math


def naive_tables(g, h):
    """Direct enumeration of an Ising system: (log_z, m, pair, q_full).

    ``g`` is a symmetric zero-diagonal coupling matrix (nested sequences),
    ``h`` the per-site fields.  The pair matrix is the truncated correlation
    with diagonal 1 - m_i^2.  Weights are exp(H - max H); all sums use fsum.
    """
    n = len(h)
    configs = []
    energies = []
    for c in range(1 << n):
        sig = [1 if (c >> b) & 1 else -1 for b in range(n)]
        terms = [g[i][j] * sig[i] * sig[j] for i in range(n) for j in range(i + 1, n)]
        terms += [h[i] * sig[i] for i in range(n)]
        configs.append(sig)
        energies.append(math.fsum(terms))
    shift = max(energies)
    weights = [math.exp(e - shift) for e in energies]
    z = math.fsum(weights)
    log_z = math.log(z) + shift
    m = [math.fsum(w * sig[i] for w, sig in zip(weights, configs)) / z for i in range(n)]
    pair = [[0.0] * n for _ in range(n)]
    for i in range(n):
        pair[i][i] = 1.0 - m[i] ** 2
        for j in range(i + 1, n):
            raw = math.fsum(w * sig[i] * sig[j] for w, sig in zip(weights, configs)) / z
            pair[i][j] = raw - m[i] * m[j]
            pair[j][i] = pair[i][j]
    q_full = math.fsum(v * v for v in m) / n
    return log_z, m, pair, q_full


def naive_raw_moment(g, h, indices):
    """Raw moment <sigma_{i1} ... sigma_{ik}> by direct enumeration."""
    n = len(h)
    num_terms = []
    den_terms = []
    energies = []
    sigs = []
    for c in range(1 << n):
        sig = [1 if (c >> b) & 1 else -1 for b in range(n)]
        terms = [g[i][j] * sig[i] * sig[j] for i in range(n) for j in range(i + 1, n)]
        terms += [h[i] * sig[i] for i in range(n)]
        energies.append(math.fsum(terms))
        sigs.append(sig)
    shift = max(energies)
    for e, sig in zip(energies, sigs):
        w = math.exp(e - shift)
        prod = 1.0
        for ix in indices:
            prod *= sig[ix]
        num_terms.append(w * prod)
        den_terms.append(w)
    return math.fsum(num_terms) / math.fsum(den_terms)


def bisect_fixed_point(t, h, expect_fn, tol=1e-13):
    """Bisection root of q - E tanh^2(h + sqrt(t q) Z) on [0, 1].

    ``expect_fn(fn)`` must return the Gaussian expectation of ``fn``; the
    caller supplies an integrator (a dense quadrature or similar).
    """

    def gap(q):
        return q - expect_fn(lambda z: math.tanh(h + math.sqrt(t * q) * z) ** 2)

    lo, hi = 0.0, 1.0
    if gap(0.0) >= 0.0:
        return 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if gap(mid) <= 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def ks_two_sample(x, y):
    """Two-sample Kolmogorov-Smirnov statistic and its 1% critical value."""
    xs = sorted(x)
    ys = sorted(y)
    nx, ny = len(xs), len(ys)
    ix = iy = 0
    d = 0.0
    while ix < nx and iy < ny:
        if xs[ix] <= ys[iy]:
            ix += 1
        else:
            iy += 1
        d = max(d, abs(ix / nx - iy / ny))
    crit = 1.628 * math.sqrt((nx + ny) / (nx * ny))  # alpha = 0.01
    return d, crit
