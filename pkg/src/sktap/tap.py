"""Replica-symmetric fixed point, AT criterion, and TAP residuals.

The analytic side evaluates Gaussian expectations with Gauss-Hermite
quadrature: the overlap map f(x) = E tanh^2(h + sqrt(t x) Z), its derivative,
the fixed point q = f(q), the AT value E t sech^4(h + sqrt(t q) Z), and the
leading-order prediction for E m_ij^2.

The residual side confronts four self-consistent equations with exact Gibbs
data: the cavity (hierarchical) forms, which use leave-one-out magnetizations
and carry no reaction term, and the classical forms, which use full-system
quantities plus the Onsager correction t (1 - q_N) m_i.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import BranchError, NonConvergenceError, NumericalError
from .gibbs import ReducedSpec, gibbs_tables, magnetizations
from .model import CouplingMatrix, ModelParams


def _sech(y: np.ndarray) -> np.ndarray:
    """Overflow-free 1/cosh: 2 e^{-|y|} / (1 + e^{-2|y|})."""
    a = np.exp(-np.abs(y))
    return 2.0 * a / (1.0 + a * a)


@dataclass
class QuadratureRule:
    """Nodes/weights integrating g against the standard Gaussian: E g(Z) = sum w g(z)."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if nodes.shape != weights.shape or nodes.ndim != 1 or nodes.size == 0:
            raise ValueError("nodes and weights must be matching 1d sequences")
        if np.any(weights <= 0):
            raise ValueError("weights must be positive")
        self.nodes = nodes
        self.weights = weights

    @classmethod
    def gauss_hermite(cls, count: int = 61) -> "QuadratureRule":
        """Gauss-Hermite rule mapped to the standard Gaussian via z = sqrt(2) x."""
        if count < 1:
            raise ValueError(f"count must be >= 1, got {count}")
        x, w = np.polynomial.hermite.hermgauss(count)
        return cls(nodes=np.sqrt(2.0) * x, weights=w / np.sqrt(np.pi))

    def doubled(self) -> "QuadratureRule":
        """Same family with twice the node count (adequacy certification)."""
        return QuadratureRule.gauss_hermite(2 * self.nodes.size)

    def expect(self, values: np.ndarray) -> float:
        return float(self.weights @ values)


_DEFAULT_RULE = None


def default_rule() -> QuadratureRule:
    global _DEFAULT_RULE
    if _DEFAULT_RULE is None:
        _DEFAULT_RULE = QuadratureRule.gauss_hermite(61)
    return _DEFAULT_RULE


def f_map(x: float, t: float, h: float, rule: QuadratureRule | None = None) -> float:
    """Overlap response map f(x) = E tanh^2(h + sqrt(t x) Z)."""
    if x < 0:
        raise ValueError(f"x must be >= 0, got {x}")
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    rule = rule or default_rule()
    y = h + math.sqrt(t * x) * rule.nodes
    return rule.expect(np.tanh(y) ** 2)


def f_prime(x: float, t: float, h: float, rule: QuadratureRule | None = None) -> float:
    """Derivative of the overlap map: t E (1 - 2 sinh^2 y)/cosh^4 y at y = h + sqrt(t x) Z.

    Evaluated as sech^4 - 2 tanh^2 sech^2, which stays finite for any y.
    Satisfies |f'(x)| <= t everywhere.
    """
    if x < 0:
        raise ValueError(f"x must be >= 0, got {x}")
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    rule = rule or default_rule()
    y = h + math.sqrt(t * x) * rule.nodes
    s2 = _sech(y) ** 2
    return t * rule.expect(s2 * s2 - 2.0 * (np.tanh(y) ** 2) * s2)


def solve_q(
    t: float,
    h: float,
    rule: QuadratureRule | None = None,
    tol: float = 1e-12,
    max_iter: int = 10_000,
    damping: float = 1.0,
) -> float:
    """Fixed point q = f(q) by damped iteration from q_0 = tanh^2(h).

    Uniqueness of the fixed point is guaranteed for t < 1 (|f'| <= t); larger
    t is accepted but converges to whichever fixed point the iteration finds
    (q = 0 at h = 0).  Falls back to bisection on q - f(q) over [0, 1] when
    the damped iteration stalls, and raises rather than returning a partially
    converged value.
    """
    if tol <= 0:
        raise ValueError(f"tol must be > 0, got {tol}")
    if not 0 < damping <= 1:
        raise ValueError(f"damping must be in (0, 1], got {damping}")
    rule = rule or default_rule()
    q = math.tanh(h) ** 2
    for _ in range(max_iter):
        fq = f_map(q, t, h, rule)
        if abs(q - fq) <= tol:
            return q
        q = (1.0 - damping) * q + damping * fq
    # Bisection fallback on g(q) = q - f(q); g(0) <= 0 and g(1) > 0.
    lo, hi = 0.0, 1.0
    if -f_map(0.0, t, h, rule) > 0:
        raise NonConvergenceError("no bracket for the fixed point on [0, 1]")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid - f_map(mid, t, h, rule) <= 0:
            lo = mid
        else:
            hi = mid
    q = lo
    if abs(q - f_map(q, t, h, rule)) > tol:
        raise NonConvergenceError(
            f"fixed point not reached at t={t}, h={h}: residual {abs(q - f_map(q, t, h, rule)):.3e}"
        )
    return q


def at_value(t: float, h: float, q: float, rule: QuadratureRule | None = None) -> float:
    """AT criterion value E t sech^4(sqrt(t q) Z + h); below 1 means replica-symmetric."""
    if not 0 <= q <= 1:
        raise ValueError(f"q must be in [0, 1], got {q}")
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    rule = rule or default_rule()
    y = h + math.sqrt(t * q) * rule.nodes
    return t * rule.expect(_sech(y) ** 4)


def _sech4_mean(t: float, h: float, q: float, rule: QuadratureRule) -> float:
    y = h + math.sqrt(t * q) * rule.nodes
    return rule.expect(_sech(y) ** 4)


def predicted_mij_sq(
    t: float,
    h: float,
    n: int,
    rule: QuadratureRule | None = None,
    certify_tol: float = 1e-10,
) -> float:
    """Leading-order prediction of E m_ij^2 for a pair of sites.

    (t/n) [1 - t E sech^4]^{-1} [E sech^4]^2 evaluated at the fixed point q.
    The prefactor is singular at the AT line; the computation fails
    explicitly there.  Quadrature adequacy is certified by recomputing with
    doubled nodes.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rule = rule or default_rule()

    def value(r: QuadratureRule) -> float:
        q = solve_q(t, h, r)
        es4 = _sech4_mean(t, h, q, r)
        denom = 1.0 - t * es4
        if denom <= 0:
            raise BranchError(
                f"prediction undefined at/below the AT line: 1 - t E sech^4 = {denom:.3e}"
            )
        return (t / n) * es4**2 / denom

    v = value(rule)
    v2 = value(rule.doubled())
    if abs(v - v2) > certify_tol:
        raise NumericalError(
            f"quadrature not converged: node-doubling delta {abs(v - v2):.3e}"
        )
    return v


@dataclass
class ResidualReport:
    """Per-index residuals of one self-consistency equation plus their mean square."""

    kind: str
    residuals: dict
    mean_square: float

    @classmethod
    def create(cls, kind: str, residuals: dict) -> "ResidualReport":
        vals = np.array([residuals[k] for k in sorted(residuals)])
        return cls(kind=kind, residuals=residuals, mean_square=float(np.mean(vals**2)))

    @staticmethod
    def _key_str(key) -> str:
        if isinstance(key, tuple):
            return ",".join(str(v) for v in key)
        return str(key)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "residuals": {self._key_str(k): float(v) for k, v in self.residuals.items()},
            "mean_square": self.mean_square,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_csv_text(self) -> str:
        lines = ["index,residual,squared_residual"]
        for k in sorted(self.residuals):
            v = self.residuals[k]
            lines.append(f"{self._key_str(k).replace(',', ';')},{v:.17g},{v * v:.17g}")
        return "\n".join(lines) + "\n"


def htap1_residuals(
    cm: CouplingMatrix, params: ModelParams, engine: str = "block"
) -> ResidualReport:
    """Cavity-form magnetization residuals m_i - tanh(h_i + sum_j g_ij m_j^{(i)}).

    m^{(i)} is the magnetization vector with particle i removed; no reaction
    term appears in this form.
    """
    full_m = magnetizations(cm, params, engine=engine)
    g = cm.entries
    res = {}
    for i in range(params.n):
        cav = magnetizations(cm, params, ReducedSpec(removed={i}), engine)
        cav[i] = 0.0
        arg = params.field[i] + g[i] @ cav
        res[i] = float(full_m[i] - math.tanh(arg))
    return ResidualReport.create("hTAP1", res)


def htap2_residual(
    cm: CouplingMatrix, params: ModelParams, i: int, j: int, engine: str = "block"
) -> float:
    """Cavity-form pair residual for sites i != j.

    m_ij - (1 - tanh^2(h_i + sum_k g_ik m_k^{(i)})) * sum_l g_il m_lj^{(i)},
    where the l = j term uses the diagonal convention m_jj = 1 - m_j^2.
    """
    if i == j:
        raise ValueError("pair residual needs i != j")
    full = gibbs_tables(cm, params, engine=engine)
    cav = gibbs_tables(cm, params, ReducedSpec(removed={i}), engine)
    g = cm.entries
    mvec = np.where(cav.active, cav.m, 0.0)
    colj = np.where(cav.active, cav.pair[:, j], 0.0)
    arg = params.field[i] + g[i] @ mvec
    return float(full.pair[i, j] - (1.0 - math.tanh(arg) ** 2) * (g[i] @ colj))


def tap1_residuals(
    cm: CouplingMatrix, params: ModelParams, engine: str = "block"
) -> ResidualReport:
    """Classical TAP residuals m_i - tanh(h_i + sum_j g_ij m_j - t (1 - q_N) m_i).

    Everything on the right comes from the full-system tables, with
    q_N = n^{-1} sum_k m_k^2.
    """
    tabs = gibbs_tables(cm, params, engine=engine)
    onsager = params.t * (1.0 - tabs.q_n)
    args = params.field + cm.entries @ tabs.m - onsager * tabs.m
    res = {i: float(tabs.m[i] - math.tanh(args[i])) for i in range(params.n)}
    return ResidualReport.create("TAP1", res)


def tap2_residual(
    cm: CouplingMatrix, params: ModelParams, i: int, j: int, engine: str = "block"
) -> float:
    """Classical TAP pair residual for sites i != j.

    m_ij - (1 - m_i^2) (sum_k g_ik m_kj + (2t/n) (M m)_j m_i - t (1 - q_N) m_ij)
    with M the full pair matrix (diagonal 1 - m_k^2) and m the magnetizations.
    """
    if i == j:
        raise ValueError("pair residual needs i != j")
    tabs = gibbs_tables(cm, params, engine=engine)
    big_m = tabs.pair
    mm_j = float(big_m[j] @ tabs.m)
    inner = (
        float(cm.entries[i] @ big_m[:, j])
        + (2.0 * params.t / params.n) * mm_j * tabs.m[i]
        - params.t * (1.0 - tabs.q_n) * big_m[i, j]
    )
    return float(big_m[i, j] - (1.0 - tabs.m[i] ** 2) * inner)
