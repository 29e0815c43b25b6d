"""Exact polynomial algebra for certifying the equalization theory.

Polynomials are in ``x = z^-1`` (causal filters), with coefficients that are
either :class:`fractions.Fraction` or Gaussian rationals :class:`QI`. No
floating point is used anywhere in this module.

Manifold phases for the equal direct-path checks are powers of the rational unit
``ZETA = (3 + 4i)/5``. Since ``ZETA`` is not a root of unity, distinct powers
give distinct phases, and phase equalities can be tested exactly.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations, permutations
from math import gcd
import random
import time

from .errors import ConfigError


class QI:
    """Gaussian rational ``(a + i*b) / n`` held as integers with ``n > 0`` in lowest terms."""

    __slots__ = ("a", "b", "n")

    def __init__(self, re=0, im=0):
        re, im = Fraction(re), Fraction(im)
        n = re.denominator * im.denominator // gcd(re.denominator, im.denominator)
        self._set(re.numerator * (n // re.denominator), im.numerator * (n // im.denominator), n)

    def _set(self, a, b, n):
        g = gcd(gcd(a, b), n)
        if g > 1:
            a, b, n = a // g, b // g, n // g
        self.a, self.b, self.n = a, b, n
        return self

    @classmethod
    def _raw(cls, a, b, n):
        return object.__new__(cls)._set(a, b, n)

    @property
    def re(self):
        return Fraction(self.a, self.n)

    @property
    def im(self):
        return Fraction(self.b, self.n)

    @staticmethod
    def lift(v):
        if isinstance(v, QI):
            return v
        v = Fraction(v)
        return QI._raw(v.numerator, 0, v.denominator)

    def __add__(self, o):
        o = QI.lift(o)
        return QI._raw(self.a * o.n + o.a * self.n, self.b * o.n + o.b * self.n, self.n * o.n)

    __radd__ = __add__

    def __sub__(self, o):
        o = QI.lift(o)
        return QI._raw(self.a * o.n - o.a * self.n, self.b * o.n - o.b * self.n, self.n * o.n)

    def __rsub__(self, o):
        return QI.lift(o) - self

    def __neg__(self):
        return QI._raw(-self.a, -self.b, self.n)

    def __mul__(self, o):
        o = QI.lift(o)
        return QI._raw(self.a * o.a - self.b * o.b, self.a * o.b + self.b * o.a, self.n * o.n)

    __rmul__ = __mul__

    def abs2(self):
        return Fraction(self.a * self.a + self.b * self.b, self.n * self.n)

    def conj(self):
        return QI._raw(self.a, -self.b, self.n)

    def inverse(self):
        m = self.a * self.a + self.b * self.b
        if m == 0:
            raise ZeroDivisionError("QI division by zero")
        # n / (a + ib) = n (a - ib) / m
        a, b, n = self.n * self.a, -self.n * self.b, m
        return QI._raw(a, b, n) if n > 0 else QI._raw(-a, -b, -n)

    def __truediv__(self, o):
        return self * QI.lift(o).inverse()

    def __rtruediv__(self, o):
        return QI.lift(o) * self.inverse()

    def __pow__(self, k):
        if k < 0:
            return self.inverse() ** (-k)
        out, base = QI(1), self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __eq__(self, o):
        if not isinstance(o, QI):
            try:
                o = QI.lift(o)
            except (TypeError, ValueError):
                return NotImplemented
        return self.a == o.a and self.b == o.b and self.n == o.n

    def __hash__(self):
        return hash((self.a, self.b, self.n))

    def __complex__(self):
        return complex(self.a / self.n, self.b / self.n)

    def __repr__(self):
        return f"QI({self.re}, {self.im})"


ZETA = QI(Fraction(3, 5), Fraction(4, 5))


def _is_zero(c):
    return c == 0


class Poly:
    """Polynomial in ``z^-1``; ``coeffs[j]`` multiplies ``z^-j``."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs=()):
        cs = [c if isinstance(c, QI) else Fraction(c) for c in coeffs]
        while cs and _is_zero(cs[-1]):
            cs.pop()
        self.coeffs = tuple(cs)

    @classmethod
    def const(cls, c):
        return cls([c])

    @classmethod
    def delay(cls, d):
        return cls([0] * d + [1])

    @property
    def degree(self):
        """Highest power of ``z^-1``; ``-1`` for the zero polynomial."""
        return len(self.coeffs) - 1

    def is_zero(self):
        return not self.coeffs

    def is_constant(self):
        return len(self.coeffs) <= 1

    def at_infinity(self):
        """Value as ``z -> infinity``, i.e. the lag-0 coefficient."""
        return self.coeffs[0] if self.coeffs else Fraction(0)

    def lead(self):
        return self.coeffs[-1]

    def __getitem__(self, j):
        return self.coeffs[j] if 0 <= j < len(self.coeffs) else Fraction(0)

    def __add__(self, o):
        o = _as_poly(o)
        n = max(len(self.coeffs), len(o.coeffs))
        return Poly([self[j] + o[j] for j in range(n)])

    __radd__ = __add__

    def __neg__(self):
        return Poly([-c for c in self.coeffs])

    def __sub__(self, o):
        return self + (-_as_poly(o))

    def __rsub__(self, o):
        return _as_poly(o) - self

    def __mul__(self, o):
        o = _as_poly(o)
        if self.is_zero() or o.is_zero():
            return Poly()
        out = [Fraction(0)] * (len(self.coeffs) + len(o.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            if _is_zero(a):
                continue
            for j, b in enumerate(o.coeffs):
                out[i + j] = out[i + j] + a * b
        return Poly(out)

    __rmul__ = __mul__

    def scale(self, c):
        return Poly([c * a for a in self.coeffs])

    def shift(self, d):
        """Multiply by ``z^-d``."""
        return Poly([0] * d + list(self.coeffs)) if self.coeffs else Poly()

    def divmod(self, o):
        if o.is_zero():
            raise ZeroDivisionError("polynomial division by zero")
        rem = list(self.coeffs)
        q = [Fraction(0)] * max(0, len(rem) - len(o.coeffs) + 1)
        lo = o.lead()
        for k in range(len(q) - 1, -1, -1):
            f = rem[k + o.degree] / lo
            q[k] = f
            if _is_zero(f):
                continue
            for j, b in enumerate(o.coeffs):
                rem[k + j] = rem[k + j] - f * b
        return Poly(q), Poly(rem[:o.degree] if o.degree > 0 else [])

    def monic(self):
        if self.is_zero():
            return self
        lead = self.lead()
        return self.scale(lead.inverse() if isinstance(lead, QI) else 1 / lead)

    def divides(self, o):
        return _as_poly(o).divmod(self)[1].is_zero()

    def __eq__(self, o):
        o = _as_poly(o)
        return len(self.coeffs) == len(o.coeffs) and all(
            a == b for a, b in zip(self.coeffs, o.coeffs))

    def __hash__(self):
        return hash(self.coeffs)

    def to_complex(self):
        return [complex(c) for c in self.coeffs]

    def __repr__(self):
        return f"Poly({list(self.coeffs)})"


def _as_poly(v):
    return v if isinstance(v, Poly) else Poly.const(v)


def poly_gcd(p, q):
    """Monic greatest common divisor by the Euclidean algorithm."""
    p, q = _as_poly(p), _as_poly(q)
    if p.is_zero() and q.is_zero():
        raise ConfigError("gcd of two zero polynomials is undefined")
    while not q.is_zero():
        p, q = q, p.divmod(q)[1]
    return p.monic()


def gcd_all(polys):
    polys = [p for p in polys if not p.is_zero()]
    if not polys:
        return Poly()
    g = polys[0].monic()
    for p in polys[1:]:
        if g.is_constant():
            break
        g = poly_gcd(g, p)
    return g


def poly_det(M):
    """Determinant of a square polynomial matrix (Leibniz expansion)."""
    n = len(M)
    total = Poly()
    for perm in permutations(range(n)):
        sign = 1
        seen = list(perm)
        for i in range(n):
            for j in range(i + 1, n):
                if seen[i] > seen[j]:
                    sign = -sign
        term = Poly.const(sign)
        for i, j in enumerate(perm):
            term = term * M[i][j]
            if term.is_zero():
                break
        total = total + term
    return total


def _shape(H):
    rows = len(H)
    cols = len(H[0]) if rows else 0
    if any(len(row) != cols for row in H):
        raise ConfigError("polynomial matrix must be rectangular")
    return rows, cols


def k_minors_gcd(H, K):
    """Monic gcd of all ``K x K`` minors of ``H``; the zero polynomial if every minor vanishes."""
    rows, cols = _shape(H)
    if K > rows or K > cols or K < 1:
        raise ConfigError(f"cannot take {K}-minors of a {rows}x{cols} matrix")
    minors = []
    for rs in combinations(range(rows), K):
        for cs in combinations(range(cols), K):
            minors.append(poly_det([[H[i][j] for j in cs] for i in rs]))
    return gcd_all(minors)


def remove_row(H, r):
    return [row for i, row in enumerate(H) if i != r]


def solve_linear(A, b):
    """One exact solution of ``A x = b`` (free variables set to zero), or ``None``.

    ``A`` is a list of rows; ``b`` is a list, or a list of right-hand-side
    lists (then the result is a list of solutions, ``None`` for infeasible
    columns).
    """
    multi = bool(b) and isinstance(b[0], (list, tuple))
    B = [list(r) for r in b] if multi else [[v] for v in b]
    m = len(A)
    n = len(A[0]) if m else 0
    nb = len(B[0]) if B else 0
    M = [list(A[i]) + list(B[i]) for i in range(m)]
    pivots = []
    row = 0
    for col in range(n):
        piv = next((i for i in range(row, m) if not _is_zero(M[i][col])), None)
        if piv is None:
            continue
        M[row], M[piv] = M[piv], M[row]
        inv = M[row][col].inverse() if isinstance(M[row][col], QI) else 1 / M[row][col]
        M[row] = [v * inv for v in M[row]]
        for i in range(m):
            if i != row and not _is_zero(M[i][col]):
                f = M[i][col]
                M[i] = [a - f * p for a, p in zip(M[i], M[row])]
        pivots.append(col)
        row += 1
        if row == m:
            break
    sols = []
    for k in range(nb):
        if any(not _is_zero(M[i][n + k]) for i in range(row, m)):
            sols.append(None)
            continue
        x = [Fraction(0)] * n
        for i, col in enumerate(pivots):
            x[col] = M[i][n + k]
        sols.append(x)
    return sols if multi else sols[0]


@dataclass
class MclpFilterSet:
    """``G_r = 1 - z^-d U_r`` and ``G_i = -z^-d U_i`` for ``i != r``."""

    U: list
    r: int
    d: int

    def __post_init__(self):
        if self.d < 1:
            raise ConfigError("d must be >= 1")
        if not 0 <= self.r < len(self.U):
            raise ConfigError("reference out of range")

    @property
    def G(self):
        out = []
        for i, u in enumerate(self.U):
            g = -u.shift(self.d)
            if i == self.r:
                g = g + 1
            out.append(g)
        return out


@dataclass
class EqualizerResult:
    found: bool
    order: int
    filters: MclpFilterSet = None
    c: list = None

    @property
    def status(self):
        return "found" if self.found else f"not found up to order {self.order}"


def _max_degree(H):
    return max((p.degree for row in H for p in row), default=0)


def _conv_rows(H, k, n_unknown_per_channel, shift, n_eq):
    """Rows of the linear map ``(U_1..U_N) -> sum_i z^-shift U_i H_{i,k}`` (coefficients 0..n_eq-1)."""
    N = len(H)
    rows = [[Fraction(0)] * (N * n_unknown_per_channel) for _ in range(n_eq)]
    for i in range(N):
        h = H[i][k].coeffs
        for j in range(n_unknown_per_channel):
            for t, hv in enumerate(h):
                m = shift + j + t
                if m < n_eq:
                    rows[m][i * n_unknown_per_channel + j] = hv
    return rows


def solve_equalizer(H, r, d=1, max_order=None):
    """Search for MCLP-form filters with ``sum_i G_i H_{i,k} = c_k`` for all ``k``.

    ``H`` is an ``N x K`` list of :class:`Poly`. Filters ``U_i`` have degree at
    most ``max_order`` (default ``N * max deg H``). A negative result only
    means no solution exists at that order.
    """
    N, K = _shape(H)
    if d < 1:
        raise ConfigError("d must be >= 1")
    if not 0 <= r < N:
        raise ConfigError("reference out of range")
    deg = max(_max_degree(H), 0)
    if max_order is None:
        max_order = N * max(deg, 1)
    P = max_order + 1
    n_eq = d + max_order + deg + 1
    A, b = [], []
    for k in range(K):
        conv = _conv_rows(H, k, P, d, n_eq)
        target = H[r][k]
        # coefficient m >= 1 of H_{r,k} must be cancelled by the prediction
        for m in range(1, n_eq):
            A.append(conv[m])
            b.append(target[m])
    x = solve_linear(A, b)
    if x is None:
        return EqualizerResult(False, max_order)
    U = [Poly(x[i * P:(i + 1) * P]) for i in range(N)]
    filters = MclpFilterSet(U, r, d)
    c = [H[r][k].at_infinity() for k in range(K)]
    return EqualizerResult(True, max_order, filters, c)


@dataclass
class IdentityCheck:
    ok: bool
    c: list = None
    reason: str = ""


def verify_constant_identity(filters, H):
    """Evaluate ``sum_i G_i H_{i,k}`` exactly; succeed iff every entry is constant."""
    N, K = _shape(H)
    G = filters.G if isinstance(filters, MclpFilterSet) else [_as_poly(g) for g in filters]
    if len(G) != N:
        raise ConfigError("filter count must equal the number of rows of H")
    c = []
    for k in range(K):
        s = Poly()
        for i in range(N):
            s = s + G[i] * H[i][k]
        if not s.is_constant():
            return IdentityCheck(False, None, f"entry {k} has degree {s.degree}")
        c.append(s.at_infinity())
    if isinstance(filters, MclpFilterSet):
        for k in range(K):
            if c[k] != H[filters.r][k].at_infinity():
                return IdentityCheck(False, c, f"c_{k} differs from H_r,k(inf)")
    return IdentityCheck(True, c)


def solve_mint(H, max_order=None):
    """Unconstrained ``K x N`` filters with ``G H = I``; ``None`` if not found up to ``max_order``."""
    N, K = _shape(H)
    deg = max(_max_degree(H), 0)
    if max_order is None:
        max_order = (2 * K - 1) * max(deg, 1)
    P = max_order + 1
    n_eq = max_order + deg + 1
    A, rhs = [], []
    for k in range(K):
        conv = _conv_rows(H, k, P, 0, n_eq)
        A.extend(conv)
    for row in range(K):
        col = []
        for k in range(K):
            col.extend([Fraction(1 if (k == row and m == 0) else 0) for m in range(n_eq)])
        rhs.append(col)
    B = [list(v) for v in zip(*rhs)]
    sols = solve_linear(A, B)
    if any(s is None for s in sols):
        return None
    return [[Poly(s[i * P:(i + 1) * P]) for i in range(N)] for s in sols]


def check_mint(G, H):
    N, K = _shape(H)
    for a in range(K):
        for b in range(K):
            s = Poly()
            for i in range(N):
                s = s + G[a][i] * H[i][b]
            if s != Poly.const(1 if a == b else 0):
                return False
    return True


# Equal direct-path constructions ----------------------------------------------

@dataclass
class PhaseScene:
    """``h_{i,k}(s) = Ht_{i,k}(s) * ZETA**m[i][k]`` with manifold exponents ``m``."""

    H: list
    m: list
    direct: list   # per source, the lag-0 tap before the phase


def shared_direct_matrix(rng, N, K, degree=2, coef_range=3, exponent_range=5, direct=None,
                       perturb=None):
    """Random exact channel matrix with equal lag-0 taps across microphones.

    ``perturb=(i, k, factor)`` multiplies one lag-0 tap, breaking the
    assumption for a negative control. Exponent rows of zeros model a
    microphone at the array centre.
    """
    direct = direct or [Fraction(rng.randint(1, 4)) for _ in range(K)]
    m = [[rng.randint(-exponent_range, exponent_range) for _ in range(K)] for _ in range(N)]
    H = []
    for i in range(N):
        row = []
        for k in range(K):
            taps = [direct[k]] + [Fraction(rng.randint(-coef_range, coef_range))
                                  for _ in range(degree)]
            if perturb is not None and (i, k) == tuple(perturb[:2]):
                taps[0] = taps[0] * Fraction(perturb[2])
            row.append(Poly(taps).scale(ZETA ** m[i][k]))
        H.append(row)
    return PhaseScene(H, m, direct)


@dataclass
class PhaseReport:
    consistent: bool
    c: dict = field(default_factory=dict)          # r -> [c_k]
    normalised: dict = field(default_factory=dict)  # r -> [c_k / ZETA**m_rk]
    skipped: list = field(default_factory=list)


def phase_law_check(scene, d=1, refs=None, max_order=None, results=None):
    """Solve for every reference and test ``c_k^(r) = c'_k * ZETA**m[r][k]`` exactly.

    ``ZETA**m`` stands for ``exp(-j w tau_{r,k})``; a consistent report means
    the magnitude is independent of ``r`` and the phase equals the manifold
    phase up to a per-source constant. ``results`` may map references to
    already computed :class:`EqualizerResult` objects.
    """
    H = scene.H
    N, K = _shape(H)
    refs = range(N) if refs is None else refs
    rep = PhaseReport(True)
    for r in refs:
        res = results[r] if results and r in results else solve_equalizer(H, r, d, max_order)
        if not res.found:
            rep.skipped.append(r)
            continue
        rep.c[r] = res.c
        rep.normalised[r] = [res.c[k] / ZETA ** scene.m[r][k] for k in range(K)]
    vals = list(rep.normalised.values())
    rep.consistent = bool(vals) and all(v == vals[0] for v in vals) and not rep.skipped
    return rep


# Randomised suites ----------------------------------------------------------

def random_poly(rng, degree, coef_range=5, nonzero_lag0=True):
    while True:
        cs = [rng.randint(-coef_range, coef_range) for _ in range(degree + 1)]
        if (not nonzero_lag0 or cs[0] != 0) and any(cs):
            return Poly(cs)


def _coprime(polys):
    return gcd_all(polys).is_constant()


def suite_single_source(seed=0, trials=100, N=3, max_degree=4):
    """Single-source MCLP-form equalizers for coprime channels at ``d = 1``."""
    rng = random.Random(seed)
    t0 = time.perf_counter()
    failures, d2_found = [], 0
    for t in range(trials):
        r = rng.randrange(N)
        while True:
            H = [[random_poly(rng, rng.randint(1, max_degree))] for _ in range(N)]
            if _coprime([row[0] for i, row in enumerate(H) if i != r]):
                break
        res = solve_equalizer(H, r, d=1)
        chk = verify_constant_identity(res.filters, H) if res.found else None
        if not (res.found and chk.ok and chk.c[0] == H[r][0].at_infinity()):
            failures.append(t)
        d2_found += solve_equalizer(H, r, d=2).found
    return {"name": "single_source", "trials": trials, "failures": failures,
            "passed": not failures, "d2_found": d2_found,
            "seconds": time.perf_counter() - t0}


def suite_multi_source(seed=0, trials=50, N=4, K=2, degree=2):
    """Multi-source equalizers, ``c = H_r(inf)``, and the direct-path phase law."""
    rng = random.Random(seed)
    t0 = time.perf_counter()
    failures, phase_failures, control_failures = [], [], []
    done = 0
    while done < trials:
        scene = shared_direct_matrix(rng, N, K, degree)
        if not all(k_minors_gcd(remove_row(scene.H, r), K).is_constant() for r in range(N)):
            continue
        ok = True
        results = {}
        for r in range(N):
            res = results[r] = solve_equalizer(scene.H, r, d=1)
            chk = verify_constant_identity(res.filters, scene.H) if res.found else None
            if not (res.found and chk.ok and
                    chk.c == [scene.H[r][k].at_infinity() for k in range(K)]):
                ok = False
        if not ok:
            failures.append(done)
        if not phase_law_check(scene, results=results).consistent:
            phase_failures.append(done)
        # same exponents and taps, one lag-0 tap doubled
        bad = PhaseScene([row[:] for row in scene.H], scene.m, scene.direct)
        i, k = rng.randrange(N), rng.randrange(K)
        bad.H[i][k] = bad.H[i][k] + Poly.const(scene.H[i][k].at_infinity())
        if all(k_minors_gcd(remove_row(bad.H, r), K).is_constant() for r in range(N)):
            if phase_law_check(bad).consistent:
                control_failures.append(done)
        done += 1
    return {"name": "multi_source", "trials": trials, "failures": failures,
            "phase_failures": phase_failures, "control_failures": control_failures,
            "passed": not (failures or phase_failures or control_failures), "seconds": time.perf_counter() - t0}


def suite_minor_gcd(seed=0, trials=50, N=3, K=2, degree=2):
    """Constant K-minor gcd if and only if an exact MINT equalizer exists."""
    rng = random.Random(seed)
    t0 = time.perf_counter()
    counterexamples, n_constant = [], 0
    for t in range(trials):
        H = [[random_poly(rng, rng.randint(0, degree), 3, False) for _ in range(K)]
             for _ in range(N)]
        if t % 2:
            # right factor with a non-constant determinant plants a common divisor
            a = rng.choice([-2, -1, 1, 2])
            Q = [[Poly([1, a]) if (i == j == 0) else Poly.const(int(i == j)) for j in range(K)]
                 for i in range(K)]
            H = [[sum((H[i][l] * Q[l][j] for l in range(K)), Poly()) for j in range(K)]
                 for i in range(N)]
        g = k_minors_gcd(H, K)
        constant = (not g.is_zero()) and g.is_constant()
        n_constant += constant
        G = solve_mint(H)
        exists = G is not None and check_mint(G, H)
        if constant != exists:
            counterexamples.append(t)
    return {"name": "minor_gcd", "trials": trials, "counterexamples": counterexamples,
            "constant_gcd": n_constant, "passed": not counterexamples,
            "seconds": time.perf_counter() - t0}


def run_all(seed=0):
    suites = [suite_single_source(seed), suite_multi_source(seed), suite_minor_gcd(seed)]
    return {"seed": seed, "suites": suites, "passed": all(s["passed"] for s in suites)}
