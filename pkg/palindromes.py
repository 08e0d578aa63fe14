"""
DNA Palindromes
I.i.d. base sequences, 2L-palindrome indicators at every admissible center and a FASTA reader
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.stats import poisson

from carrier import PointConfig
from errors import InvalidInputError, ResourceLimitError
from trials import IndicatorModel, grid_config, grid_marks

logger = logging.getLogger(__name__)

ALPHABET = "ACGTN"
BASE_CODE = {base: code for code, base in enumerate(ALPHABET)}
# complementary codes sum to 3; N (4) never pairs
N_CODE = 4

EXACT_PMF_MAX_TRIALS = 16
EXACT_PMF_MAX_CELLS = 1 << 24


# =========================================================================
# MODEL
# =========================================================================

@dataclass(frozen=True, eq=False)
class PalindromeModel:
    """M i.i.d. bases with probabilities (p_A, p_C, p_G, p_T); palindromes of length >= 2L"""
    M: int
    L: int
    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float).ravel()
        if probs.size != 4 or probs.min() < 0 or abs(probs.sum() - 1.0) > 1e-12:
            raise InvalidInputError("base probabilities (A, C, G, T) must be nonnegative and sum to 1")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        if self.L < 1:
            raise InvalidInputError(f"half-length L={self.L} must be >= 1")
        if self.M < 2 * self.L:
            raise InvalidInputError(f"sequence length M={self.M} is shorter than 2L={2 * self.L}")
        if not self.theta > 0:
            raise InvalidInputError("no base has a complementary partner with positive probability")

    @classmethod
    def uniform(cls, M: int, L: int) -> "PalindromeModel":
        return cls(M, L, np.full(4, 0.25))

    @property
    def n(self) -> int:
        """Number of admissible centers, M - 2L + 1"""
        return self.M - 2 * self.L + 1

    @property
    def theta(self) -> float:
        pa, pc, pg, pt = self.probs
        return 2.0 * (pa * pt + pc * pg)

    @property
    def p_site(self) -> float:
        return self.theta ** self.L

    @property
    def lam(self) -> float:
        return self.n * self.p_site

    @property
    def band(self) -> int:
        return 2 * self.L - 1

    @property
    def pair_law(self) -> np.ndarray:
        """Law of the left base of a complementary pair, proportional to p_x p_comp(x)"""
        weights = self.probs * self.probs[::-1]
        return weights / weights.sum()

    @property
    def assumptions(self) -> Dict[str, bool]:
        pa, pc, pg, pt = self.probs
        return {
            "p_A = p_T and p_C = p_G": bool(np.isclose(pa, pt) and np.isclose(pc, pg)),
            "4 <= L <= n/500": bool(4 <= self.L <= self.n / 500),
        }


# =========================================================================
# SEQUENCES
# =========================================================================

def encode(sequence: str) -> np.ndarray:
    """Base letters to codes A=0, C=1, G=2, T=3, N=4"""
    sequence = sequence.upper()
    bad = set(sequence) - set(ALPHABET)
    if bad:
        raise InvalidInputError(f"unexpected symbols {sorted(bad)} in sequence")
    lookup = np.full(256, 255, dtype=np.uint8)
    for base, code in BASE_CODE.items():
        lookup[ord(base)] = code
    return lookup[np.frombuffer(sequence.encode("ascii"), dtype=np.uint8)]


def decode(codes: np.ndarray) -> str:
    return "".join(ALPHABET[c] for c in np.asarray(codes))


def read_fasta(path: Union[str, Path]) -> Tuple[str, np.ndarray]:
    """
    Read a single-record FASTA file

    Returns:
        (header, codes)

    Raises:
        InvalidInputError: for several records, no sequence or symbols outside ACGTN
    """
    header = ""
    chunks: List[str] = []
    records = 0
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith(">"):
            records += 1
            if records > 1:
                raise InvalidInputError(f"{path}: only single-record FASTA files are supported")
            header = line[1:].strip()
        else:
            chunks.append(line)
    sequence = "".join(chunks)
    if not sequence:
        raise InvalidInputError(f"{path}: no sequence found")
    logger.info("read %d bases from %s", len(sequence), path)
    return header, encode(sequence)


def fit_base_probs(codes: np.ndarray) -> np.ndarray:
    """Base frequencies over the non-N positions"""
    counts = np.bincount(np.asarray(codes)[np.asarray(codes) < N_CODE], minlength=4)[:4]
    if counts.sum() == 0:
        raise InvalidInputError("sequence has no A/C/G/T bases")
    return counts / counts.sum()


def palindrome_indicators(codes: np.ndarray, L: int) -> np.ndarray:
    """
    I_i = 1 iff bases i..i+2L-1 read as a 2L-palindrome (0-based i)

    Args:
        codes: Encoded sequence
        L: Half-length

    Returns:
        Boolean array of length len(codes) - 2L + 1
    """
    codes = np.asarray(codes, dtype=np.int16)
    n = codes.size - 2 * L + 1
    if n < 1:
        return np.zeros(0, dtype=bool)
    starts = np.arange(n)
    hit = np.ones(n, dtype=bool)
    for k in range(1, L + 1):
        hit &= codes[starts + L - k] + codes[starts + L - 1 + k] == 3
    return hit


def sample_dna(pm: PalindromeModel, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, PointConfig]:
    """
    One i.i.d. sequence and its palindrome process

    Returns:
        (codes, indicators, xi) with xi = sum_i I_i delta_{i/n}
    """
    codes = rng.choice(4, size=pm.M, p=pm.probs).astype(np.uint8)
    indicators = palindrome_indicators(codes, pm.L)
    return codes, indicators, grid_config(indicators)


# =========================================================================
# EXACT LAWS
# =========================================================================

def palindrome_pair_probability(pm: PalindromeModel, gap: int) -> float:
    """
    P(I_i = I_{i+gap} = 1) for an i.i.d. sequence

    The two windows impose 'complementary' constraints between base positions;
    each connected group of constrained bases is two-coloured, and contributes
    sum_x p_x^a p_comp(x)^b, or 0 when it contains an odd cycle.
    """
    gap = abs(int(gap))
    L = pm.L
    if gap >= 2 * L:
        return pm.p_site ** 2
    size = 2 * L + gap
    edges: Dict[int, List[int]] = {v: [] for v in range(size)}
    for start in (0, gap):
        for k in range(1, L + 1):
            a, b = start + L - k, start + L - 1 + k
            edges[a].append(b)
            edges[b].append(a)

    colour = [-1] * size
    prob = 1.0
    for root in range(size):
        if colour[root] >= 0 or not edges[root]:
            continue
        colour[root] = 0
        sides = [0, 0]
        stack = [root]
        while stack:
            v = stack.pop()
            sides[colour[v]] += 1
            for w in edges[v]:
                if colour[w] < 0:
                    colour[w] = 1 - colour[v]
                    stack.append(w)
                elif colour[w] == colour[v]:
                    return 0.0
        prob *= float(np.sum(pm.probs ** sides[0] * pm.probs[::-1] ** sides[1]))
    return prob


def _window_palindromes(L: int) -> np.ndarray:
    """Palindrome flag for (oldest base, remaining state, new base) in the transfer recursion"""
    width = 2 * L - 1
    rest_states = 4 ** (width - 1)
    rest = np.arange(rest_states)
    # digit d of rest holds the base at window position width - 1 - d
    digits = (rest[:, None] // (4 ** np.arange(width - 1))[None, :]) % 4
    window = np.empty((4, rest_states, 4, 2 * L), dtype=np.int16)
    window[..., 0] = np.arange(4)[:, None, None]
    for t in range(1, width):
        window[..., t] = digits[None, :, width - 1 - t, None]
    window[..., 2 * L - 1] = np.arange(4)[None, None, :]
    hit = np.ones((4, rest_states, 4), dtype=bool)
    for k in range(1, L + 1):
        hit &= window[..., L - k] + window[..., L - 1 + k] == 3
    return hit


def palindrome_exact_pmf(pm: PalindromeModel) -> np.ndarray:
    """
    Joint pmf of (I_1..I_n) by a transfer recursion over the last 2L - 1 bases

    Raises:
        ResourceLimitError: when n > 16 or the state table would exceed 2^24 cells
    """
    n, L = pm.n, pm.L
    width = 2 * L - 1
    states = 4 ** width
    if n > EXACT_PMF_MAX_TRIALS or states * (1 << n) > EXACT_PMF_MAX_CELLS:
        raise ResourceLimitError(f"exact palindrome pmf too large (n={n}, L={L})")

    # newest base in the lowest base-4 digit
    start = np.ones(1)
    for _ in range(width):
        start = (start[:, None] * pm.probs[None, :]).reshape(-1)
    dist = start[None, :]
    hit = _window_palindromes(L)
    rest_states = states // 4

    for _ in range(n):
        patterns = dist.shape[0]
        folded = dist.reshape(patterns, 4, rest_states)
        nxt = np.zeros((2, patterns, rest_states, 4))
        for b in range(4):
            mass = folded * pm.probs[b]
            nxt[0, :, :, b] = (mass * ~hit[None, :, :, b]).sum(axis=1)
            nxt[1, :, :, b] = (mass * hit[None, :, :, b]).sum(axis=1)
        dist = nxt.reshape(2 * patterns, states)
    return dist.sum(axis=1)


# =========================================================================
# INDICATOR MODEL
# =========================================================================

def palindrome_coupler(pm: PalindromeModel):
    """
    Palm coupling at window i: resample the L pairs of window i from the
    complementary-pair law and recompute only the overlapping windows
    """
    L, n, band = pm.L, pm.n, pm.band
    pair_law = pm.pair_law

    def coupler(i: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        codes = rng.choice(4, size=pm.M, p=pm.probs).astype(np.uint8)
        base = palindrome_indicators(codes, L)
        forced = codes.copy()
        left = rng.choice(4, size=L, p=pair_law)
        ks = np.arange(1, L + 1)
        forced[i + L - ks] = left
        forced[i + L - 1 + ks] = 3 - left
        lo, hi = max(0, i - band), min(n - 1, i + band)
        palm = base.copy()
        palm[lo:hi + 1] = palindrome_indicators(forced[lo:hi + 2 * L], L)
        return base, palm

    return coupler


def palindrome_indicator_model(pm: PalindromeModel, exact: Optional[bool] = None) -> IndicatorModel:
    """
    Locally dependent indicator model of the palindrome centers

    Neighborhoods are the band |i - j| <= 2L - 1 and trial i is marked at i/n.
    The exact pmf is attached when small enough (or when exact=True).
    """
    small = pm.n <= EXACT_PMF_MAX_TRIALS and 4 ** pm.band * (1 << pm.n) <= EXACT_PMF_MAX_CELLS
    pmf = palindrome_exact_pmf(pm) if (exact if exact is not None else small) else None

    def sampler(rng: np.random.Generator) -> np.ndarray:
        codes = rng.choice(4, size=pm.M, p=pm.probs).astype(np.uint8)
        return palindrome_indicators(codes, pm.L)

    marks, mark_carrier = grid_marks(pm.n)
    return IndicatorModel(
        p=np.full(pm.n, pm.p_site),
        band=pm.band,
        joint_sampler=sampler,
        exact_pmf=pmf,
        palm_coupler=palindrome_coupler(pm),
        marks=marks,
        mark_carrier=mark_carrier,
        locally_dependent=True,
        identity_outside=True,
        name=f"palindrome(M={pm.M}, L={pm.L})",
    )


def sequence_summary(codes: np.ndarray, L: int) -> Dict[str, object]:
    """
    Palindrome statistics of an observed sequence under its fitted i.i.d. model

    Returns:
        Dict with fitted probabilities, the observed count, the 1-based window
        positions, the distinct palindromic words with their
        counts, the fitted lambda and P(Po(lambda) >= observed)
    """
    probs = fit_base_probs(codes)
    pm = PalindromeModel(int(np.asarray(codes).size), L, probs)
    indicators = palindrome_indicators(codes, L)
    observed = int(indicators.sum())
    starts = np.flatnonzero(indicators)
    words = [decode(np.asarray(codes)[i:i + 2 * L]) for i in starts]
    return {
        "model": pm,
        "probs": probs.tolist(),
        "n_bases": int(pm.M),
        "n_ambiguous": int(np.sum(np.asarray(codes) == N_CODE)),
        "observed": observed,
        "positions": (starts + 1).tolist(),
        "motifs": {w: words.count(w) for w in sorted(set(words))},
        "lambda": pm.lam,
        "upper_tail": float(poisson.sf(observed - 1, pm.lam)),
        "indicators": indicators,
    }
