"""Uniform point sets on the unit hypercube: pseudo-random, Halton and scrambled Sobol.

All generators are pure functions of ``(kind, n, d, seed)``. Sobol points use
Joe-Kuo direction numbers (bundled in ``data/joe_kuo_d1111.txt``) and are
randomized with a linear matrix scramble followed by a random digital shift.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

BITS = 32
_SCALE = 2.0**-BITS
_MASK64 = (1 << 64) - 1


class UnsupportedDimensionError(ValueError):
    """Requested Sobol dimension exceeds the bundled direction-number table."""


class NonPowerOfTwoWarning(UserWarning):
    """QMC sample count is not a power of two; balance guarantees do not hold."""


class SequenceKind(str, enum.Enum):
    MC = "MC"
    HALTON = "Halton"
    SOBOL = "SobolScrambled"

    @classmethod
    def parse(cls, value: "str | SequenceKind") -> "SequenceKind":
        """Accept enum members, their values, or the CLI alias ``QMC``."""
        if isinstance(value, SequenceKind):
            return value
        key = str(value).strip()
        aliases = {"mc": cls.MC, "qmc": cls.SOBOL, "sobol": cls.SOBOL, "halton": cls.HALTON}
        for member in cls:
            if key == member.value or key == member.name:
                return member
        try:
            return aliases[key.lower()]
        except KeyError:
            raise ValueError(f"unknown sequence kind {value!r}") from None


@dataclass(frozen=True)
class PointSet:
    values: np.ndarray
    kind: SequenceKind
    seed: int

    def __post_init__(self):
        self.values.setflags(write=False)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministically mix ``seed`` with integer ``keys`` into a fresh 64-bit seed."""
    entropy = [int(seed) & _MASK64, *(int(k) & _MASK64 for k in keys)]
    lo, hi = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed) & _MASK64)


def is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def _check_sizes(n: int, d: int) -> None:
    if n < 1 or d < 1:
        raise ValueError(f"sample count and dimension must be positive, got n={n}, d={d}")
    if n > 2**BITS:
        raise ValueError(f"at most 2**{BITS} points are supported, got {n}")


# ---------------------------------------------------------------- Sobol ----


@lru_cache(maxsize=1)
def _direction_table() -> tuple[tuple[int, int, tuple[int, ...]], ...]:
    text = resources.files("plqmc").joinpath("data/joe_kuo_d1111.txt").read_text()
    rows = []
    for line in text.splitlines()[1:]:
        parts = line.split()
        if not parts:
            continue
        s, a = int(parts[1]), int(parts[2])
        rows.append((s, a, tuple(int(m) for m in parts[3 : 3 + s])))
    return tuple(rows)


def max_sobol_dimension() -> int:
    return len(_direction_table()) + 1


@lru_cache(maxsize=64)
def _direction_numbers(d: int) -> np.ndarray:
    """Direction numbers v[j, k] (k = 0..BITS-1) as BITS-bit integers, dims 0..d-1."""
    if d > max_sobol_dimension():
        raise UnsupportedDimensionError(
            f"Sobol dimension {d} exceeds the {max_sobol_dimension()} bundled dimensions"
        )
    v = np.zeros((d, BITS), dtype=np.uint64)
    v[0] = [1 << (BITS - 1 - k) for k in range(BITS)]
    table = _direction_table()
    for j in range(1, d):
        s, a, m = table[j - 1]
        vj = [0] * BITS
        for k in range(min(s, BITS)):
            vj[k] = m[k] << (BITS - 1 - k)
        for k in range(s, BITS):
            x = vj[k - s] ^ (vj[k - s] >> s)
            for i in range(1, s):
                if (a >> (s - 1 - i)) & 1:
                    x ^= vj[k - i]
            vj[k] = x
        v[j] = vj
    v = v.astype(np.uint32)
    v.setflags(write=False)
    return v


def _gray_columns(n: int) -> np.ndarray:
    """Index of the direction number flipped when stepping from point i-1 to i."""
    i = np.arange(n - 1, dtype=np.uint64)
    # lowest zero bit of i-1 == lowest set bit of ~(i-1)
    low = (~i) & (i + 1)
    return np.log2(low.astype(np.float64)).astype(np.intp)


def _accumulate(v: np.ndarray, n: int, start: np.ndarray) -> np.ndarray:
    """Gray-code Sobol points from direction numbers ``v[..., d, BITS]``."""
    lead = v.shape[:-1]
    out = np.empty(lead[:-1] + (n,) + lead[-1:], dtype=np.uint32)
    out[..., 0, :] = start
    if n > 1:
        out[..., 1:, :] = np.moveaxis(v[..., _gray_columns(n)], -1, -2)
        np.bitwise_xor.accumulate(out, axis=-2, out=out)
    return out


def sobol_raw(n: int, d: int) -> PointSet:
    """Unscrambled Sobol points in Gray-code order, starting with the origin."""
    _check_sizes(n, d)
    ints = _accumulate(_direction_numbers(d), n, np.zeros(d, dtype=np.uint32))
    return PointSet(ints * _SCALE, SequenceKind.SOBOL, 0)


_BIT_WEIGHTS = (np.uint32(1) << np.arange(BITS - 1, -1, -1, dtype=np.uint32)).astype(np.uint32)


def _to_bits(x: np.ndarray) -> np.ndarray:
    """uint32 -> (..., BITS) array of 0/1, most significant digit first."""
    return ((x[..., None] >> np.arange(BITS - 1, -1, -1, dtype=np.uint32)) & 1).astype(np.uint8)


def _from_bits(b: np.ndarray) -> np.ndarray:
    return (b.astype(np.uint32) * _BIT_WEIGHTS).sum(axis=-1, dtype=np.uint32)


def _scramble_matrices(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """Random lower-triangular binary matrices with unit diagonal."""
    m = rng.integers(0, 2, size=shape + (BITS, BITS), dtype=np.uint8)
    m = np.tril(m, k=-1)
    m[..., np.arange(BITS), np.arange(BITS)] = 1
    return m


def _scrambled_sobol(n: int, d: int, reps: int, rng: np.random.Generator) -> np.ndarray:
    v = _direction_numbers(d)
    used = max(1, int(n - 1).bit_length())
    lmat = _scramble_matrices(rng, (reps, d))
    shift = rng.integers(0, 2**BITS, size=(reps, d), dtype=np.uint64).astype(np.uint32)
    vbits = _to_bits(v[:, :used])  # (d, used, BITS)
    scrambled = np.matmul(lmat[:, :, None], vbits[None, :, :, :, None])[..., 0] & 1
    vs = _from_bits(scrambled)  # (reps, d, used)
    return _accumulate(vs, n, shift) * _SCALE


def scramble(raw: PointSet, seed: int) -> PointSet:
    """Matrix-scramble plus digital shift of an unscrambled Gray-code Sobol point set.

    Applies the same randomization as ``generate(SOBOL, ...)`` but works from
    the raw point coordinates, so it accepts any prefix produced by ``sobol_raw``.
    """
    rng = _rng(seed)
    n, d = raw.values.shape
    lmat = _scramble_matrices(rng, (d,))
    shift = rng.integers(0, 2**BITS, size=d, dtype=np.uint64).astype(np.uint32)
    ints = np.floor(np.asarray(raw.values) * 2.0**BITS).astype(np.uint32)
    bits = _to_bits(ints)  # (n, d, BITS)
    out = np.einsum("dij,ndj->ndi", lmat.astype(np.int64), bits.astype(np.int64)) & 1
    return PointSet((_from_bits(out) ^ shift) * _SCALE, SequenceKind.SOBOL, int(seed))


# --------------------------------------------------------------- Halton ----


@lru_cache(maxsize=8)
def first_primes(count: int) -> tuple[int, ...]:
    primes: list[int] = []
    candidate = 2
    while len(primes) < count:
        if all(candidate % p for p in primes if p * p <= candidate):
            primes.append(candidate)
        candidate += 1
    return tuple(primes)


def _is_prime(b: int) -> bool:
    return b >= 2 and all(b % p for p in range(2, int(b**0.5) + 1))


def _radical_inverse(index: np.ndarray, base: int) -> np.ndarray:
    idx = np.array(index, dtype=np.int64, copy=True)
    out = np.zeros(idx.shape, dtype=np.float64)
    f = 1.0 / base
    while np.any(idx > 0):
        out += (idx % base) * f
        idx //= base
        f /= base
    return out


def halton_radical_inverse(index: int, base: int) -> float:
    """Base-``base`` digit reversal of ``index`` mirrored about the radix point."""
    if not _is_prime(base):
        raise ValueError(f"Halton base must be prime, got {base}")
    if index < 0:
        raise ValueError(f"index must be non-negative, got {index}")
    return float(_radical_inverse(np.asarray([index]), base)[0])


# Random-start offsets stay small enough that sums of digits remain exact.
_HALTON_MAX_OFFSET = 2**40


def _halton(n: int, d: int, offsets: np.ndarray) -> np.ndarray:
    primes = first_primes(d)
    idx = offsets[..., None] + np.arange(1, n + 1, dtype=np.int64)  # (reps, n)
    cols = [_radical_inverse(idx, p) for p in primes]
    return np.minimum(np.stack(cols, axis=-1), np.nextafter(1.0, 0.0))


# ------------------------------------------------------------ interface ----


def _warn_power_of_two(kind: SequenceKind, n: int) -> None:
    if kind is not SequenceKind.MC and not is_power_of_two(n):
        warnings.warn(
            f"{kind.value} with n={n}: QMC guarantees need n to be a power of two",
            NonPowerOfTwoWarning,
            stacklevel=3,
        )


def generate(kind, n: int, d: int, seed: int, *, randomize: bool = True) -> PointSet:
    """Return an ``n x d`` point set of ``kind`` values in [0, 1).

    ``randomize=False`` gives the deterministic (seed-independent) Halton or
    raw Sobol sequence; MC draws are always random.
    """
    kind = SequenceKind.parse(kind)
    _check_sizes(n, d)
    _warn_power_of_two(kind, n)
    if kind is SequenceKind.SOBOL and not randomize:
        return sobol_raw(n, d)
    values = generate_batch(kind, n, d, 1, seed, randomize=randomize, _warn=False)[0]
    return PointSet(values, kind, int(seed))


def generate_batch(
    kind, n: int, d: int, reps: int, seed: int, *, randomize: bool = True, _warn: bool = True
) -> np.ndarray:
    """``reps`` independent randomizations stacked as a ``(reps, n, d)`` array.

    A single generator seeded by ``seed`` drives every replicate, so the result
    is a pure function of the arguments (but replicate ``r`` is not the same as
    ``generate(..., seed=r)``).
    """
    kind = SequenceKind.parse(kind)
    _check_sizes(n, d)
    if reps < 1:
        raise ValueError(f"reps must be positive, got {reps}")
    if _warn:
        _warn_power_of_two(kind, n)
    rng = _rng(seed)
    if kind is SequenceKind.MC:
        return rng.random((reps, n, d))
    if kind is SequenceKind.HALTON:
        if randomize:
            offsets = rng.integers(0, _HALTON_MAX_OFFSET, size=reps, dtype=np.int64)
        else:
            offsets = np.zeros(reps, dtype=np.int64)
        return _halton(n, d, offsets)
    if not randomize:
        return np.broadcast_to(sobol_raw(n, d).values, (reps, n, d)).copy()
    # bound the scratch memory of the bit-matrix products
    chunk = max(1, 2**22 // (d * BITS * BITS))
    parts = [
        _scrambled_sobol(n, d, min(chunk, reps - start), rng) for start in range(0, reps, chunk)
    ]
    return parts[0] if len(parts) == 1 else np.concatenate(parts, axis=0)


def star_discrepancy_2d(points: np.ndarray) -> float:
    """Star discrepancy of a 2-D point set, exact over anchored boxes.

    Corners range over the grid spanned by the point coordinates (plus 1); both
    open and closed boxes are checked at each corner.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    xs = np.append(np.sort(pts[:, 0]), 1.0)
    ys = np.append(np.sort(pts[:, 1]), 1.0)
    # counts[i, j] = #points with x <= xs[i], y <= ys[j]  (closed)
    ix = np.searchsorted(xs, pts[:, 0], side="left")
    iy = np.searchsorted(ys, pts[:, 1], side="left")
    grid = np.zeros((n + 1, n + 1), dtype=np.int64)
    np.add.at(grid, (ix, iy), 1)
    closed = grid.cumsum(0).cumsum(1)
    opened = np.zeros_like(closed)
    opened[1:, 1:] = closed[:-1, :-1]
    vol = np.outer(xs, ys)
    return float(max(np.max(closed / n - vol), np.max(vol - opened / n)))
