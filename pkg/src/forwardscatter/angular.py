"""Angular-momentum coupling coefficients.

Wigner 3j, Clebsch-Gordan and Wigner 6j symbols for integer and
half-integer momenta, evaluated with the Racah single-sum formulas over a
lazily extended log-factorial table. Momenta are handled internally as
doubled integers so that selection rules are decided exactly.

Also provides the spin-matrix utilities used to build irreducible tensor
operators of a ground-state multiplet.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np

__all__ = [
    "AngularInputError",
    "HalfInt",
    "wigner_3j",
    "clebsch_gordan",
    "wigner_6j",
    "wigner_3j_array",
    "wigner_6j_array",
    "cg_table",
    "spin_matrices",
    "cyclic_components",
    "irreducible_tensor",
    "orientation_tensor",
    "alignment_tensor",
]


class AngularInputError(ValueError):
    """Raised for malformed momenta or projections."""


@dataclass(frozen=True, order=True)
class HalfInt:
    """An integer or half-integer stored as twice its value."""

    twice: int

    @classmethod
    def of(cls, value: "HalfIntLike") -> "HalfInt":
        if isinstance(value, HalfInt):
            return value
        if isinstance(value, str):
            value = Fraction(value)
        if isinstance(value, (bool, np.bool_)):
            raise AngularInputError(f"not an angular momentum: {value!r}")
        if isinstance(value, float) and not math.isfinite(value):
            raise AngularInputError(f"not an angular momentum: {value!r}")
        doubled = 2 * Fraction(value) if not isinstance(value, float) else Fraction(2 * value)
        if doubled.denominator != 1:
            raise AngularInputError(f"{value!r} is not an integer or half-integer")
        return cls(int(doubled))

    @property
    def value(self) -> float:
        return self.twice / 2

    @property
    def is_integer(self) -> bool:
        return self.twice % 2 == 0

    def __float__(self) -> float:
        return self.twice / 2

    def __neg__(self) -> "HalfInt":
        return HalfInt(-self.twice)

    def __add__(self, other: "HalfIntLike") -> "HalfInt":
        return HalfInt(self.twice + HalfInt.of(other).twice)

    def __sub__(self, other: "HalfIntLike") -> "HalfInt":
        return HalfInt(self.twice - HalfInt.of(other).twice)

    def __str__(self) -> str:
        return str(self.twice // 2) if self.twice % 2 == 0 else f"{self.twice}/2"


HalfIntLike = Union[HalfInt, int, float, Fraction, str]


def _twice(value: HalfIntLike) -> int:
    return HalfInt.of(value).twice


def _check_momentum(tj: int, name: str = "j") -> None:
    if tj < 0:
        raise AngularInputError(f"{name} must be non-negative, got {tj / 2}")


def _check_projection(tj: int, tm: int) -> None:
    if abs(tm) > tj or (tj - tm) % 2:
        raise AngularInputError(f"projection m={tm / 2} invalid for j={tj / 2}")


# -- log-factorial table ----------------------------------------------------

_LOGFACT = np.array([0.0])
_LOGFACT_LOCK = threading.Lock()
_INITIAL_TABLE = 2 * 200 + 2


def _logfact_table(n: int) -> np.ndarray:
    """Return a table of log(k!) valid for 0 <= k <= n."""
    global _LOGFACT
    table = _LOGFACT
    if table.size > n:
        return table
    with _LOGFACT_LOCK:
        if _LOGFACT.size <= n:
            size = max(_INITIAL_TABLE, 2 * _LOGFACT.size, n + 1)
            _LOGFACT = np.array([math.lgamma(k + 1.0) for k in range(size)])
        return _LOGFACT


_logfact_table(_INITIAL_TABLE)


def _triangle_ok(ta, tb, tc):
    """Triangle rule and integer perimeter for doubled momenta (arrays ok)."""
    ta, tb, tc = np.asarray(ta), np.asarray(tb), np.asarray(tc)
    return (
        (tc <= ta + tb)
        & (tc >= np.abs(ta - tb))
        & ((ta + tb + tc) % 2 == 0)
    )


def _log_delta(lf, ta, tb, tc):
    # log of (a+b-c)!(a-b+c)!(-a+b+c)!/(a+b+c+1)! for valid triads
    return (
        lf[(ta + tb - tc) // 2]
        + lf[(ta - tb + tc) // 2]
        + lf[(-ta + tb + tc) // 2]
        - lf[(ta + tb + tc) // 2 + 1]
    )


def _alternating_sum(log_terms, signs, mask):
    """Sum sign*exp(log_terms) along the last axis, scaled for stability."""
    log_terms = np.where(mask, log_terms, -np.inf)
    peak = np.max(log_terms, axis=-1, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    terms = np.where(mask, signs * np.exp(log_terms - peak), 0.0)
    return np.sum(terms, axis=-1) * np.exp(peak[..., 0])


def wigner_3j_array(tj1, tj2, tj3, tm1, tm2, tm3):
    """Vectorized 3j symbols from doubled-integer arrays.

    Inputs are assumed to be valid (non-negative momenta, projections of
    matching parity and within range); selection-rule failures give 0.
    """
    tj1, tj2, tj3, tm1, tm2, tm3 = np.broadcast_arrays(
        *(np.asarray(x, dtype=np.int64) for x in (tj1, tj2, tj3, tm1, tm2, tm3))
    )
    shape = tj1.shape
    tj1, tj2, tj3, tm1, tm2, tm3 = (x.ravel() for x in (tj1, tj2, tj3, tm1, tm2, tm3))
    ok = _triangle_ok(tj1, tj2, tj3) & (tm1 + tm2 + tm3 == 0)
    ok &= (np.abs(tm1) <= tj1) & (np.abs(tm2) <= tj2) & (np.abs(tm3) <= tj3)
    out = np.zeros(tj1.shape)
    if not np.any(ok):
        return out.reshape(shape)
    j1, j2, j3, m1, m2, m3 = (x[ok] for x in (tj1, tj2, tj3, tm1, tm2, tm3))
    lf = _logfact_table(int((j1 + j2 + j3).max()) // 2 + 2)

    # all of these combinations are integers for valid input
    a1 = (j3 - j2 + m1) // 2
    a2 = (j3 - j1 - m2) // 2
    b1 = (j1 + j2 - j3) // 2
    b2 = (j1 - m1) // 2
    b3 = (j2 + m2) // 2
    kmin = np.maximum(0, np.maximum(-a1, -a2))
    kmax = np.minimum(b1, np.minimum(b2, b3))
    nterm = int((kmax - kmin).max()) + 1
    k = kmin[:, None] + np.arange(nterm)[None, :]
    mask = k <= kmax[:, None]
    kk = np.where(mask, k, kmin[:, None])
    log_pref = 0.5 * (
        _log_delta(lf, j1, j2, j3)
        + lf[(j1 + m1) // 2] + lf[(j1 - m1) // 2]
        + lf[(j2 + m2) // 2] + lf[(j2 - m2) // 2]
        + lf[(j3 + m3) // 2] + lf[(j3 - m3) // 2]
    )
    log_den = (
        lf[kk]
        + lf[a1[:, None] + kk]
        + lf[a2[:, None] + kk]
        + lf[b1[:, None] - kk]
        + lf[b2[:, None] - kk]
        + lf[b3[:, None] - kk]
    )
    signs = np.where(kk % 2 == 0, 1.0, -1.0)
    total = _alternating_sum(log_pref[:, None] - log_den, signs, mask)
    phase = np.where(((j1 - j2 - m3) // 2) % 2 == 0, 1.0, -1.0)
    out[ok] = phase * total
    return out.reshape(shape)


def wigner_6j_array(t1, t2, t3, t4, t5, t6):
    """Vectorized 6j symbols {j1 j2 j3; j4 j5 j6} from doubled-integer arrays."""
    t1, t2, t3, t4, t5, t6 = np.broadcast_arrays(
        *(np.asarray(x, dtype=np.int64) for x in (t1, t2, t3, t4, t5, t6))
    )
    shape = t1.shape
    t1, t2, t3, t4, t5, t6 = (x.ravel() for x in (t1, t2, t3, t4, t5, t6))
    ok = (
        _triangle_ok(t1, t2, t3)
        & _triangle_ok(t1, t5, t6)
        & _triangle_ok(t4, t2, t6)
        & _triangle_ok(t4, t5, t3)
    )
    out = np.zeros(t1.shape)
    if not np.any(ok):
        return out.reshape(shape)
    a, b, c, d, e, f = (x[ok] for x in (t1, t2, t3, t4, t5, t6))
    al1 = (a + b + c) // 2
    al2 = (a + e + f) // 2
    al3 = (d + b + f) // 2
    al4 = (d + e + c) // 2
    be1 = (a + b + d + e) // 2
    be2 = (b + c + e + f) // 2
    be3 = (c + a + f + d) // 2
    tmin = np.maximum(np.maximum(al1, al2), np.maximum(al3, al4))
    tmax = np.minimum(be1, np.minimum(be2, be3))
    lf = _logfact_table(int(tmax.max()) + 2)
    nterm = int((tmax - tmin).max()) + 1
    t = tmin[:, None] + np.arange(nterm)[None, :]
    mask = t <= tmax[:, None]
    tt = np.where(mask, t, tmin[:, None])
    log_pref = 0.5 * (
        _log_delta(lf, a, b, c)
        + _log_delta(lf, a, e, f)
        + _log_delta(lf, d, b, f)
        + _log_delta(lf, d, e, c)
    )
    log_num = lf[tt + 1]
    log_den = (
        lf[tt - al1[:, None]]
        + lf[tt - al2[:, None]]
        + lf[tt - al3[:, None]]
        + lf[tt - al4[:, None]]
        + lf[be1[:, None] - tt]
        + lf[be2[:, None] - tt]
        + lf[be3[:, None] - tt]
    )
    signs = np.where(tt % 2 == 0, 1.0, -1.0)
    out[ok] = _alternating_sum(log_pref[:, None] + log_num - log_den, signs, mask)
    return out.reshape(shape)


def wigner_3j(j1, j2, j3, m1, m2, m3) -> float:
    """Wigner 3j symbol (j1 j2 j3; m1 m2 m3).

    Returns 0.0 when the triangle rule or m1 + m2 + m3 = 0 fails. Raises
    AngularInputError for negative momenta or projections that do not
    belong to their momentum.
    """
    tj = [_twice(x) for x in (j1, j2, j3)]
    tm = [_twice(x) for x in (m1, m2, m3)]
    for i, (a, b) in enumerate(zip(tj, tm)):
        _check_momentum(a, f"j{i + 1}")
        _check_projection(a, b)
    return float(wigner_3j_array(*tj, *tm))


def clebsch_gordan(j1, m1, j2, m2, J, M) -> float:
    """Clebsch-Gordan coefficient <j1 m1, j2 m2 | J M> (Condon-Shortley)."""
    tj1, tm1, tj2, tm2, tJ, tM = (_twice(x) for x in (j1, m1, j2, m2, J, M))
    for a, b in ((tj1, tm1), (tj2, tm2), (tJ, tM)):
        _check_momentum(a)
        _check_projection(a, b)
    if tm1 + tm2 != tM:
        return 0.0
    phase = -1.0 if ((tj1 - tj2 + tM) // 2) % 2 else 1.0
    return phase * math.sqrt(tJ + 1) * float(wigner_3j_array(tj1, tj2, tJ, tm1, tm2, -tM))


def wigner_6j(j1, j2, j3, j4, j5, j6) -> float:
    """Wigner 6j symbol {j1 j2 j3; j4 j5 j6}; 0.0 if any triad fails."""
    t = [_twice(x) for x in (j1, j2, j3, j4, j5, j6)]
    for x in t:
        _check_momentum(x)
    return float(wigner_6j_array(*t))


def cg_table(j1, j2):
    """All Clebsch-Gordan coefficients for coupling j1 and j2.

    Returns ``(m1, m2, J, table)`` where the first three are arrays of the
    projections and total momenta (as floats) and ``table[a, b, c]`` is
    <j1 m1[a], j2 m2[b] | J[c], m1[a] + m2[b]>.
    """
    tj1, tj2 = _twice(j1), _twice(j2)
    _check_momentum(tj1)
    _check_momentum(tj2)
    tm1 = np.arange(-tj1, tj1 + 1, 2)
    tm2 = np.arange(-tj2, tj2 + 1, 2)
    tJ = np.arange(abs(tj1 - tj2), tj1 + tj2 + 1, 2)
    A, B, C = np.meshgrid(tm1, tm2, tJ, indexing="ij")
    tM = A + B
    valid = np.abs(tM) <= C
    three = wigner_3j_array(tj1, tj2, C, A, B, np.where(valid, -tM, 0))
    phase = np.where(((tj1 - tj2 + tM) // 2) % 2 == 0, 1.0, -1.0)
    table = np.where(valid, phase * np.sqrt(C + 1.0) * three, 0.0)
    return tm1 / 2, tm2 / 2, tJ / 2, table


# -- spin matrices and irreducible tensors -------------------------------------


def spin_matrices(j):
    """Return (jx, jy, jz) for momentum j in the basis m = j, j-1, ..., -j."""
    tj = _twice(j)
    _check_momentum(tj)
    jv = tj / 2
    m = jv - np.arange(tj + 1)
    # <m+1| j+ |m>
    raise_elems = np.sqrt(jv * (jv + 1) - m[1:] * (m[1:] + 1))
    jp = np.diag(raise_elems, k=1).astype(complex)
    jm = jp.conj().T
    jx = (jp + jm) / 2
    jy = (jp - jm) / 2j
    jz = np.diag(m).astype(complex)
    return jx, jy, jz


def cyclic_components(j):
    """Cyclic spin components {q: j_q} with j_0 = jz, j_{+-1} = -+(jx +- i jy)/sqrt(2)."""
    jx, jy, jz = spin_matrices(j)
    return {
        0: jz,
        1: -(jx + 1j * jy) / math.sqrt(2),
        -1: (jx - 1j * jy) / math.sqrt(2),
    }


def irreducible_tensor(j0, K: int, Q: int):
    """Irreducible tensor T_KQ built from ground-state dyads |m'><m|.

    T_KQ = sqrt((2K+1)/(2j0+1)) sum C^{j0 m'}_{j0 m, K Q} |m'><m|, with the
    basis ordered m = j0, ..., -j0.
    """
    tj = _twice(j0)
    if abs(Q) > K:
        raise AngularInputError(f"|Q| > K for K={K}, Q={Q}")
    ms = [(tj - 2 * i) for i in range(tj + 1)]
    T = np.zeros((tj + 1, tj + 1), dtype=complex)
    for row, tmp in enumerate(ms):
        for col, tm in enumerate(ms):
            if tm + 2 * Q != tmp:
                continue
            T[row, col] = clebsch_gordan(
                Fraction(tj, 2), Fraction(tm, 2), K, Q, Fraction(tj, 2), Fraction(tmp, 2)
            )
    return math.sqrt((2 * K + 1) / (tj + 1)) * T


def orientation_tensor(j0, Q: int):
    """Rank-1 tensor expressed through the spin: sqrt(3)/sqrt(j0(j0+1)(2j0+1)) j_Q."""
    jv = HalfInt.of(j0).value
    return math.sqrt(3.0) / math.sqrt(jv * (jv + 1) * (2 * jv + 1)) * cyclic_components(j0)[Q]


def alignment_tensor(j0, Q: int):
    """Rank-2 tensor expressed through symmetrized products of spin components."""
    jv = HalfInt.of(j0).value
    denom = 2 * jv * (jv + 1) * (2 * jv - 1) * (2 * jv + 1) * (2 * jv + 3)
    if denom <= 0:
        raise AngularInputError("alignment requires j0 >= 1")
    jq = cyclic_components(j0)
    dim = jq[0].shape[0]
    out = np.zeros((dim, dim), dtype=complex)
    for q in (-1, 0, 1):
        qp = Q - q
        if abs(qp) > 1:
            continue
        c = clebsch_gordan(1, q, 1, qp, 2, Q)
        term = jq[q] @ jq[qp] + jq[qp] @ jq[q]
        if q == -qp:
            term = term - (-1) ** q * (2.0 / 3.0) * jv * (jv + 1) * np.eye(dim)
        out += c * term
    return math.sqrt(15.0 / denom) * out
