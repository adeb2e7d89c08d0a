"""Amount-splitting privacy strategy and its exact inference analysis.

A transfer total t in [1, 2^h - 1] is split into k pieces, each zero or a
power of two no larger than 2^m where m = h + 1 - log2(k), so that a
custodian observing one piece learns very little about the total. This
module implements:

  * the scale-independent prior over totals,
  * the randomized splitting procedure (single uniform draw i),
  * exact conditional and marginal piece-size distributions, computed by
    full enumeration of the draw with rational arithmetic,
  * posterior ratios Pr[T=t | piece=v] / Pr[T=t], and
  * exhaustive desk-scale verifiers for the distributional bounds the
    strategy is designed to satisfy, reported claim by claim.

All probabilities are exact fractions; no bound check depends on rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple, Optional

DESK_SCALE_LIMIT = 2**16  # exhaustive checks refuse larger supports


class SplittingError(ValueError):
    pass


class UndefinedRatioError(SplittingError):
    """Raised when conditioning on a piece value that never occurs."""


@dataclass(frozen=True)
class SplitConfig:
    """Parameters of the splitting strategy.

    h bounds the total (t in [1, 2^h - 1]); k is the number of pieces and
    must be a power of two >= 2. Pieces range over {0} U {2^j : j <= m}
    with m = h + 1 - log2 k. We require m >= k/2, which keeps the piece
    granularity integral in every branch of the procedure (the gap region
    [2^m, 2^(m+1)-1] runs with d = 0 and needs 2^(m - k/2) >= 1).
    """

    h: int
    k: int
    # derived once; the sampler sits in hot loops
    log2k: int = field(init=False, compare=False)
    m: int = field(init=False, compare=False)
    t_max: int = field(init=False, compare=False)

    def __post_init__(self):
        if self.k < 2 or self.k & (self.k - 1):
            raise SplittingError("k must be a power of two >= 2")
        if self.h < 1:
            raise SplittingError("h must be positive")
        object.__setattr__(self, "log2k", self.k.bit_length() - 1)
        object.__setattr__(self, "m", self.h + 1 - self.log2k)
        object.__setattr__(self, "t_max", 2**self.h - 1)
        if self.m < 1 or self.m < self.k // 2:
            raise SplittingError(
                f"h + 1 - log2(k) = {self.m} too small for k = {self.k}; need >= k/2"
            )

    def check_total(self, t: int) -> None:
        if not 1 <= t <= self.t_max:
            raise SplittingError(f"total {t} outside [1, {self.t_max}]")


class SplitResult(NamedTuple):
    """The k piece values (zeros included) and the untransferred remainder."""

    pieces: tuple[int, ...]
    withheld: int

    @property
    def total(self) -> int:
        return sum(self.pieces) + self.withheld


# --- prior ------------------------------------------------------------------


def prior_pmf(h: int, t: int) -> Fraction:
    """Pr[T = t] under the scale-independent prior on [1, 2^h - 1].

    The total is sampled as 2^N + A with N uniform on [0, h-1] and A uniform
    on [0, 2^N - 1]: every order of magnitude carries the same mass, and
    within one order all values are equally likely.
    """
    if not 1 <= t <= 2**h - 1:
        raise SplittingError(f"total {t} outside [1, {2**h - 1}]")
    n = t.bit_length() - 1
    return Fraction(1, h * 2**n)


def sample_prior(h: int, rng) -> int:
    n = rng.randrange(h)
    return 2**n + rng.randrange(2**n)


# --- splitting procedure ------------------------------------------------------


def _branch(t: int, cfg: SplitConfig) -> tuple[int, int, int, int]:
    """(d, e, q, i_max) for the branch handling total t.

    Small totals (t < 2^m) are split into two parts on a granularity e that
    coarsens with the total's magnitude; large totals first peel off d whole
    pieces of size 2^m. Totals in [2^m, 2^(m+1)-1] run through the large
    branch with d = 0, which is continuous with both neighbours.
    """
    m = cfg.m
    if t <= 2**m - 1:
        d = 0
        g = t.bit_length() - cfg.k // 2  # floor(log2 t) + 1 - k/2
        e = 2**g if g > 0 else 1
    else:
        d = max(0, t // 2**m - 1)
        c = (cfg.k - d) // 2
        e = 2 ** (m - c)
    q = t // e
    i_max = q - d * (2**m) // e
    return d, e, q, i_max


def draw_bound(t: int, cfg: SplitConfig) -> int:
    """Largest value of the procedure's single uniform draw i for total t."""
    cfg.check_total(t)
    return _branch(t, cfg)[3]


_BITS_MEMO: dict[int, tuple[int, ...]] = {0: ()}


def _binary_pieces(x: int) -> tuple[int, ...]:
    memo = _BITS_MEMO.get(x)
    if memo is not None:
        return memo
    out = []
    bit = 1
    v = x
    while v:
        if v & 1:
            out.append(bit)
        v >>= 1
        bit <<= 1
    result = tuple(out)
    if x < DESK_SCALE_LIMIT:
        _BITS_MEMO[x] = result
    return result


def _assemble(t: int, cfg: SplitConfig, d: int, e: int, q: int, i_max: int,
              i: int) -> SplitResult:
    if not 0 <= i <= i_max:
        raise SplittingError(f"draw {i} outside [0, {i_max}]")
    remaining = e * q - d * (1 << cfg.m)
    part_one = i * e
    pieces = (((1 << cfg.m),) * d + _binary_pieces(part_one)
              + _binary_pieces(remaining - part_one))
    if len(pieces) > cfg.k:
        raise SplittingError(f"procedure produced {len(pieces)} > k pieces for t={t}")
    return SplitResult(pieces + (0,) * (cfg.k - len(pieces)), t - e * q)


def pieces_for_draw(t: int, cfg: SplitConfig, i: int) -> SplitResult:
    """Deterministic outcome of the procedure for a fixed draw i."""
    cfg.check_total(t)
    d, e, q, i_max = _branch(t, cfg)
    return _assemble(t, cfg, d, e, q, i_max, i)


def split(t: int, cfg: SplitConfig, rng) -> SplitResult:
    """Randomized split of t into k pieces, each 0 or a power of two <= 2^m."""
    cfg.check_total(t)
    d, e, q, i_max = _branch(t, cfg)
    return _assemble(t, cfg, d, e, q, i_max, rng.randrange(i_max + 1))


# --- exact distributions ------------------------------------------------------


@dataclass(frozen=True)
class PieceDistribution:
    """Exact expectations (or probabilities) indexed by piece size.

    Index 0 is the zero piece; index j >= 1 is piece size 2^(j-1), up to
    index m+1 for the maximal size 2^m.
    """

    cfg: SplitConfig
    values: tuple[Fraction, ...]

    def __post_init__(self):
        if len(self.values) != self.cfg.m + 2:
            raise SplittingError("distribution must have m + 2 entries")

    @staticmethod
    def index_of(value: int, cfg: SplitConfig) -> int:
        if value == 0:
            return 0
        if value & (value - 1) or value > 2**cfg.m:
            raise SplittingError(f"piece value {value} is not a power of two <= 2^m")
        return value.bit_length()

    @staticmethod
    def size_of(index: int) -> int:
        return 0 if index == 0 else 2 ** (index - 1)

    def at_value(self, value: int) -> Fraction:
        return self.values[self.index_of(value, self.cfg)]


_COND_CACHE: dict[tuple[int, int, int], PieceDistribution] = {}
_MARG_CACHE: dict[tuple[int, int], PieceDistribution] = {}


def exact_conditional_expectation(t: int, cfg: SplitConfig) -> PieceDistribution:
    """E[X_j | T=t] for every piece-size index j, by enumerating every
    equiprobable value of the single draw i. No sampling involved."""
    key = (cfg.h, cfg.k, t)
    cached = _COND_CACHE.get(key)
    if cached is not None:
        return cached
    cfg.check_total(t)
    i_max = _branch(t, cfg)[3]
    counts = [0] * (cfg.m + 2)
    for i in range(i_max + 1):
        result = pieces_for_draw(t, cfg, i)
        for piece in result.pieces:
            counts[piece.bit_length()] += 1  # 0 -> 0, 2^b -> b+1
    dist = PieceDistribution(cfg, tuple(Fraction(c, i_max + 1) for c in counts))
    _COND_CACHE[key] = dist
    return dist


def marginal_expectation(cfg: SplitConfig) -> PieceDistribution:
    """E[X_j] under the prior: sum over totals of prior * conditional."""
    key = (cfg.h, cfg.k)
    cached = _MARG_CACHE.get(key)
    if cached is not None:
        return cached
    totals = [Fraction(0)] * (cfg.m + 2)
    for t in range(1, cfg.t_max + 1):
        p = prior_pmf(cfg.h, t)
        cond = exact_conditional_expectation(t, cfg).values
        for j in range(cfg.m + 2):
            totals[j] += p * cond[j]
    dist = PieceDistribution(cfg, tuple(totals))
    _MARG_CACHE[key] = dist
    return dist


def posterior_ratio(t: int, v: int, cfg: SplitConfig) -> Fraction:
    """Pr[T=t | V=v] / Pr[T=t] for one observed piece value v.

    Equals E[X_j|T=t] / E[X_j] with j the index of v; zero when the piece
    never occurs together with total t.
    """
    cfg.check_total(t)
    j = PieceDistribution.index_of(v, cfg)
    marg = marginal_expectation(cfg).values[j]
    if marg == 0:
        raise UndefinedRatioError(f"piece value {v} never occurs under h={cfg.h} k={cfg.k}")
    return exact_conditional_expectation(t, cfg).values[j] / marg


def posterior_pmf(v: int, cfg: SplitConfig) -> dict[int, Fraction]:
    """Exact posterior over totals given one observed piece value."""
    return {
        t: prior_pmf(cfg.h, t) * posterior_ratio(t, v, cfg)
        for t in range(1, cfg.t_max + 1)
    }


# --- bound verification -------------------------------------------------------


@dataclass(frozen=True)
class ClaimRow:
    """One verified claim: lhs against rhs, with its parameters."""

    claim: str
    param_j: object
    param_t: object
    lhs: Fraction
    rhs: Fraction
    passed: bool


# Claims carrying these tags are allowed to fail: each one is the alternate
# reading of a documented ambiguity (index convention) or an informational
# row outside the guarantee's range (gap/top piece).
ATTRIBUTED_TAGS = ("[idx=m]", "[literal]", "[info]")


@dataclass
class BoundsReport:
    rows: list[ClaimRow] = field(default_factory=list)

    def add(self, claim, param_j, param_t, lhs, rhs, passed=None):
        if passed is None:
            passed = lhs <= rhs
        self.rows.append(ClaimRow(claim, param_j, param_t, Fraction(lhs), Fraction(rhs), passed))

    def failures(self) -> list[ClaimRow]:
        return [r for r in self.rows if not r.passed]

    def unattributed_failures(self) -> list[ClaimRow]:
        return [
            r for r in self.failures()
            if not any(tag in r.claim for tag in ATTRIBUTED_TAGS)
        ]

    @property
    def all_pass(self) -> bool:
        """True when every claim holds, ignoring only the documented
        alternate-reading and informational rows."""
        return not self.unattributed_failures()


def _ones_in_range(count: int, bit: int) -> int:
    """How many x in [0, count) have the given bit set. Exact closed form."""
    period = 1 << (bit + 1)
    half = 1 << bit
    return (count // period) * half + max(0, (count % period) - half)


def check_lemma1(c: int, a: int) -> BoundsReport:
    """Bit statistics of a uniform draw i on [0, 2^c + a], 0 <= a < 2^c.

    Verified clauses (every probability an exact fraction):
      (i)   bits 0..c-1 each land in [1/4, 3/4];
      (ii)  bits c and c+1 are set with probability at most 1/2
            (bit c is the draw's top bit; bit c+1 is never set);
      (iii) the expected number of set bits lies in [c/4, (3c+2)/4].

    The cycling-bit bound (i) does not extend to bit c: for small a the top
    bit's probability drops below 1/4 (e.g. 1/5 at c=2, a=0), which is why
    the top bits get the one-sided clause (ii).
    """
    if not 0 <= a < 2**c:
        raise SplittingError("require 0 <= a < 2^c")
    n = 2**c + a + 1
    report = BoundsReport()
    for j in range(c):
        p = Fraction(_ones_in_range(n, j), n)
        report.add("lemma1_i_lower", j, a, Fraction(1, 4), p)
        report.add("lemma1_i_upper", j, a, p, Fraction(3, 4))
    for j in (c, c + 1):
        p = Fraction(_ones_in_range(n, j), n)
        report.add("lemma1_ii", j, a, p, Fraction(1, 2))
    expected_ones = sum(Fraction(_ones_in_range(n, j), n) for j in range(c + 2))
    report.add("lemma1_iii_lower", c, a, Fraction(c, 4), expected_ones,
               passed=expected_ones >= Fraction(c, 4))
    report.add("lemma1_iii_upper", c, a, expected_ones, Fraction(3 * c + 2, 4))
    return report


def _theorem_case_one_rhs(cfg: SplitConfig, j: int) -> Fraction:
    denom = min(Fraction(cfg.k, 2), Fraction(max(cfg.m + 1 - j, cfg.log2k)))
    return Fraction(3 * cfg.h) / denom


def check_bounds(cfg: SplitConfig, report: Optional[BoundsReport] = None) -> BoundsReport:
    """Exhaustive desk-scale verification of the strategy's guarantees.

    Covers the conditional upper bounds, the marginal lower bounds, the
    three posterior-ratio upper bounds, and the anonymity floor. Ambiguous
    clauses are reported under both readings: rows tagged [idx=m] and
    [literal] carry the alternate index conventions, rows tagged [info] sit
    outside the guarantee's range. Failures are reported, never raised.
    """
    if 2**cfg.h > DESK_SCALE_LIMIT:
        raise SplittingError(f"2^h > {DESK_SCALE_LIMIT}: refuse exhaustive check")
    if report is None:
        report = BoundsReport()
    m, k, h, lg = cfg.m, cfg.k, cfg.h, cfg.log2k

    conds = {t: exact_conditional_expectation(t, cfg) for t in range(1, cfg.t_max + 1)}
    marg = marginal_expectation(cfg).values

    # conditional upper bounds
    for t, dist in conds.items():
        for j in range(1, m - k // 2 + 1):
            report.add("lemma2_i", j, t, dist.values[j], Fraction(3, 2))
        cap = Fraction(t // 2**m)
        report.add("lemma2_ii[idx=m+1]", m + 1, t, dist.values[m + 1], cap)
        report.add("lemma2_ii[idx=m]", m, t, dist.values[m], cap)
        report.add("lemma2_iii", 0, t, dist.values[0], Fraction(k))

    # marginal lower bounds (lhs is the bound, rhs the computed marginal)
    for j in range(1, m - k // 2 + 1):
        report.add("lemma3_i", j, "", Fraction(k, 4 * h), marg[j])
    for j in range(m - k // 2 + 1, m + 1):
        report.add("lemma3_ii", j, "", Fraction(max(m + 1 - j, lg), 2 * h), marg[j])
    report.add("lemma3_iii", m + 1, "", Fraction(3 * (k - 2 * lg), 4 * h), marg[m + 1])
    report.add("lemma3_iv", 0, "", Fraction(k, 8), marg[0])

    # posterior-ratio upper bounds
    for t, dist in conds.items():
        ratio0 = dist.values[0] / marg[0]
        report.add("theorem_zero", 0, t, ratio0, Fraction(8))
        for p in range(0, m + 1):
            idx = p + 1
            if marg[idx] == 0 or dist.values[idx] == 0:
                continue
            ratio = dist.values[idx] / marg[idx]
            if p == m and t >= 2 ** (m + 1):
                rhs = Fraction(4 * h * (t // 2**m), 3 * (k - 2 * lg))
                report.add("theorem_top", p, t, ratio, rhs)
                continue
            # primary convention: the bound's j is the piece-size index
            report.add("theorem_piece", p, t, ratio, _theorem_case_one_rhs(cfg, idx))
            # alternate: j read literally off "piece value = 2^(j+1)"
            if p >= 1:
                report.add("theorem_piece[literal]", p, t, ratio,
                           _theorem_case_one_rhs(cfg, p - 1))

    # anonymity floor: scales consistent with one observed piece
    for p in range(0, m + 1):
        idx = p + 1
        scales = {
            (t.bit_length() - 1)
            for t, dist in conds.items()
            if dist.values[idx] > 0
        }
        claim = "anonymity_floor" if p < m else "anonymity_floor[info]"
        report.add(claim, p, "", Fraction(lg), Fraction(len(scales)))
    return report
