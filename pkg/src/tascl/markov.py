"""Exact Markov model of the two-stage list decoder's LLR buffer.

The chain is observed at input-slot boundaries. Its state is the time, in
units of one small-decoder slot, that the large decoder still needs to clear
everything it has been given. With speed gain ``beta = bn / bd`` that time is
always a multiple of ``1 / bd``, so states are stored as integers
``k = X * bd`` in ``0 .. bn*zeta + bn``:

* idle    ``k <= bd``                 the large decoder finishes within the slot
* safe    ``bd < k <= bn*zeta + bd``  a failing frame still fits in the buffer
* hazard  ``k > bn*zeta + bd``        the buffer is full; a failure overflows
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import spsolve

__all__ = [
    "ModelError",
    "TasclParams",
    "MarkovModel",
    "StationaryResult",
    "IDLE",
    "SAFE",
    "HAZARD",
    "reduce_states",
    "build_model",
    "stationary",
    "stationary_exact",
    "pr_overflow",
    "bler_bound",
    "check_irreducible_aperiodic",
    "overflow_probability",
    "model_rows",
    "rows_to_csv",
]

IDLE, SAFE, HAZARD = 0, 1, 2
CLASS_NAMES = ("idle", "safe", "hazard")

# models above this size are solved with a sparse direct solve instead of squaring
SQUARING_MAX_STATES = 512
RESIDUAL_TOL = 1e-10


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class TasclParams:
    beta_n: int
    beta_d: int
    zeta: int
    eps_s: float = 0.0
    eps_l: float = 0.0

    def __post_init__(self):
        if self.beta_n < 1 or self.beta_d < 1:
            raise ModelError("beta_n and beta_d must be positive integers")
        if self.zeta < 1:
            raise ModelError("zeta must be >= 1")
        for name in ("eps_s", "eps_l"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ModelError(f"{name}={v} outside [0, 1]")

    @property
    def beta(self) -> Fraction:
        return Fraction(self.beta_n, self.beta_d)

    @property
    def coprime(self) -> bool:
        return math.gcd(self.beta_n, self.beta_d) == 1

    @classmethod
    def from_beta(cls, beta, zeta: int, eps_s: float = 0.0, eps_l: float = 0.0):
        b = Fraction(*beta) if isinstance(beta, tuple) else Fraction(beta)
        return cls(b.numerator, b.denominator, zeta, eps_s, eps_l)


def reduce_states(beta_n_raw: int, beta_d_raw: int, zeta: int, eps_s: float = 0.0,
                  eps_l: float = 0.0) -> TasclParams:
    g = math.gcd(beta_n_raw, beta_d_raw)
    return TasclParams(beta_n_raw // g, beta_d_raw // g, zeta, eps_s, eps_l)


@dataclass
class MarkovModel:
    params: TasclParams
    P: np.ndarray = field(repr=False)
    classes: np.ndarray = field(repr=False)

    @property
    def S(self) -> int:
        return self.P.shape[0]

    @property
    def states(self) -> list[Fraction]:
        return [Fraction(k, self.params.beta_d) for k in range(self.S)]

    def class_counts(self) -> dict[str, int]:
        return {name: int(np.sum(self.classes == c)) for c, name in enumerate(CLASS_NAMES)}

    def successors(self, k: int) -> tuple[int, int]:
        """(next state on a small-decoder pass, next state on a failure)."""
        return _successors(k, self.params.beta_n, self.params.beta_d, self.params.zeta)


def _classify(k: int, bn: int, bd: int, zeta: int) -> int:
    if k <= bd:
        return IDLE
    if k <= bn * zeta + bd:
        return SAFE
    return HAZARD


def _successors(k: int, bn: int, bd: int, zeta: int) -> tuple[int, int]:
    c = _classify(k, bn, bd, zeta)
    if c == IDLE:
        return 0, bn
    if c == SAFE:
        return k - bd, k - bd + bn
    return k - bd, k - bd


def build_model(params: TasclParams, allow_raw: bool = False) -> MarkovModel:
    """Transition matrix over ``bn*zeta + bn + 1`` states.

    ``allow_raw`` admits a non-reduced speed gain; such a chain contains
    states that are never reached from the empty buffer.
    """
    bn, bd, zeta = params.beta_n, params.beta_d, params.zeta
    if not params.coprime and not allow_raw:
        raise ModelError(f"beta = {bn}/{bd} is not reduced; call reduce_states first")
    if bn < bd:
        raise ModelError("beta < 1 never queues a frame; the overflow probability is 0")
    S = bn * zeta + bn + 1
    es = params.eps_s
    P = np.zeros((S, S))
    classes = np.empty(S, dtype=np.int8)
    for k in range(S):
        classes[k] = _classify(k, bn, bd, zeta)
        ok, bad = _successors(k, bn, bd, zeta)
        P[k, ok] += 1.0 - es
        P[k, bad] += es
    return MarkovModel(params, P, classes)


@dataclass
class StationaryResult:
    pi: np.ndarray
    pr_hazard: float
    pr_overflow: float
    bler_upper: float
    delta_loss: float
    iterations: int = 0
    method: str = "squaring"


def _finish(model: MarkovModel, pi: np.ndarray, iterations: int, method: str) -> StationaryResult:
    pi = np.clip(pi, 0.0, None)
    pi = pi / pi.sum()
    haz = float(pi[model.classes == HAZARD].sum())
    ov = model.params.eps_s * haz
    b = bler_bound(model.params.eps_l, ov)
    return StationaryResult(pi, haz, ov, b["upper"], b["delta"], iterations, method)


def stationary(model: MarkovModel, tol: float = 1e-12, start=None, max_iter: int = 200,
               method: str = "auto") -> StationaryResult:
    """Stationary distribution reached from ``start`` (default: empty buffer).

    ``squaring`` forms P, P^2, P^4, ... until ``start @ P^(2^j)`` changes by
    less than ``tol`` in max norm. ``direct`` solves ``pi (P - I) = 0`` with a
    sparse LU factorisation, which only makes sense for a single recurrent
    class. ``auto`` picks squaring for small chains and falls back to the
    direct solve when the squared iterate is not a fixed point of P.
    """
    S = model.S
    lam = np.zeros(S)
    if start is None:
        lam[0] = 1.0
    else:
        lam = np.asarray(start, dtype=np.float64).copy()
        if lam.shape != (S,) or np.any(lam < 0) or not np.isclose(lam.sum(), 1.0):
            raise ModelError("start must be a probability vector over the states")
    auto = method == "auto"
    if auto:
        method = "squaring" if S <= SQUARING_MAX_STATES else "direct"
    if method == "direct":
        return _solve_direct(model)
    if method != "squaring":
        raise ModelError(f"unknown method {method!r}")
    Pk = model.P.copy()
    prev = lam @ Pk
    for it in range(1, max_iter + 1):
        Pk = Pk @ Pk
        Pk /= Pk.sum(axis=1, keepdims=True)  # stop round-off drift in the row sums
        cur = lam @ Pk
        if np.max(np.abs(cur - prev)) < tol:
            break
        prev = cur
    else:
        if auto:
            return _solve_direct(model)
        raise ModelError(f"no convergence after {max_iter} squarings")
    # A chain whose only aperiodic loop sits on a near-empty state behaves as periodic:
    # P^(2^j) then settles on a cycle and the stopping rule above is fooled.
    if np.max(np.abs(cur @ model.P - cur)) > RESIDUAL_TOL:
        if auto:
            return _solve_direct(model)
        raise ModelError("squaring stalled on a numerically periodic chain; use method='direct'")
    return _finish(model, cur, it, "squaring")


def _solve_direct(model: MarkovModel) -> StationaryResult:
    S = model.S
    A = (sparse.csr_matrix(model.P).T - sparse.identity(S, format="csr")).tolil()
    A[0, :] = 1.0
    b = np.zeros(S)
    b[0] = 1.0
    pi = spsolve(A.tocsc(), b)
    if not np.all(np.isfinite(pi)):
        raise ModelError("singular system: the chain has more than one recurrent class")
    return _finish(model, pi, 1, "direct")


def stationary_exact(model: MarkovModel, eps_s: Fraction | None = None) -> list[Fraction]:
    """Stationary vector in exact rational arithmetic (small chains only).

    Assumes a single recurrent class; transient states get probability 0.
    """
    p = model.params
    es = Fraction(p.eps_s) if eps_s is None else Fraction(eps_s)
    S = model.S
    # rows of the augmented system (P^T - I) pi = 0, first equation replaced by sum(pi) = 1
    A = [[Fraction(0)] * (S + 1) for _ in range(S)]
    for k in range(S):
        ok, bad = model.successors(k)
        A[ok][k] += 1 - es
        A[bad][k] += es
        A[k][k] -= 1
    A[0] = [Fraction(1)] * S + [Fraction(1)]
    for c in range(S):
        piv = next((r for r in range(c, S) if A[r][c] != 0), None)
        if piv is None:
            raise ModelError("singular system: more than one recurrent class")
        A[c], A[piv] = A[piv], A[c]
        inv = 1 / A[c][c]
        A[c] = [v * inv for v in A[c]]
        for r in range(S):
            if r != c and A[r][c] != 0:
                f = A[r][c]
                A[r] = [a - f * b for a, b in zip(A[r], A[c])]
    return [A[k][S] for k in range(S)]


def pr_overflow(result: StationaryResult, params: TasclParams) -> float:
    return params.eps_s * result.pr_hazard


def bler_bound(eps_l: float, pr_ov: float) -> dict:
    upper = eps_l + pr_ov
    delta = (upper - eps_l) / eps_l if eps_l > 0 else (0.0 if pr_ov == 0 else math.inf)
    return {"lower": eps_l, "upper": upper, "delta": delta}


def check_irreducible_aperiodic(model: MarkovModel) -> dict:
    """Strong connectivity of the transition graph and its period (gcd of cycle lengths)."""
    G = sparse.csr_matrix(model.P > 0)
    ncomp, _ = csgraph.connected_components(G, directed=True, connection="strong")
    irreducible = ncomp == 1
    # period of the class containing state 0: gcd over edges of level[u] + 1 - level[v]
    order, pred = csgraph.breadth_first_order(G, 0, directed=True, return_predecessors=True)
    level = np.full(model.S, -1, dtype=np.int64)
    level[0] = 0
    for v in order[1:]:
        level[v] = level[pred[v]] + 1
    rows, cols = G.nonzero()
    reach = (level[rows] >= 0) & (level[cols] >= 0)
    diffs = np.abs(level[rows[reach]] + 1 - level[cols[reach]])
    period = int(reduce(math.gcd, diffs.tolist(), 0))
    return {"irreducible": bool(irreducible), "aperiodic": period == 1, "period": period,
            "components": int(ncomp)}


def overflow_probability(params: TasclParams) -> float:
    """Pr(Overflow) for any speed gain; 0 when the large decoder keeps up (beta <= 1)."""
    if params.beta_n <= params.beta_d or params.eps_s == 0.0:
        return 0.0
    p = reduce_states(params.beta_n, params.beta_d, params.zeta, params.eps_s, params.eps_l)
    return stationary(build_model(p)).pr_overflow


ROW_FIELDS = ("beta", "zeta", "eps_s", "eps_l", "pr_hazard", "pr_overflow", "bler_upper", "delta")


def model_rows(betas, zetas, eps_s_values, eps_l: float = 0.0) -> list[dict]:
    rows = []
    for beta in betas:
        b = Fraction(*beta) if isinstance(beta, tuple) else Fraction(beta)
        for zeta in zetas:
            for es in eps_s_values:
                p = TasclParams(b.numerator, b.denominator, int(zeta), float(es), float(eps_l))
                if b <= 1:
                    haz = 0.0
                else:
                    haz = stationary(build_model(p)).pr_hazard
                ov = p.eps_s * haz
                bb = bler_bound(p.eps_l, ov)
                rows.append({"beta": str(b), "zeta": p.zeta, "eps_s": p.eps_s, "eps_l": p.eps_l,
                             "pr_hazard": haz, "pr_overflow": ov, "bler_upper": bb["upper"],
                             "delta": bb["delta"]})
    return rows


def rows_to_csv(rows, fields=ROW_FIELDS) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()
