"""RNS arithmetic in the negacyclic ring Z_Q[X]/(X^n + 1).

A ring element is stored as a matrix of uint64 residues, one row per active
modulus.  The modulus chain is ``q_0 .. q_L`` plus one *special* prime used
only inside key material and key switching; a fresh element at level ``l``
carries rows for ``q_0 .. q_l`` (plus the special row when requested).

Two representations coexist:

* coefficient domain — rows hold polynomial coefficients in standard order;
* NTT domain — rows hold negacyclic evaluations (bit-reversed order, see
  :mod:`fhefl.ntt`); products are pointwise there.

Rescaling (`drop_level`) is the exact RNS divide-and-round by the last active
modulus: subtract the centered remainder, then multiply by its inverse on the
remaining rows.  Dropping rows without rounding (`mod_reduce_to`) is plain
modulus reduction and keeps the encoded scale untouched.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, LevelError, ParameterError, SerializationError
from .ntt import (
    PrimeContext,
    add_mod,
    find_ntt_primes,
    is_prime,
    make_prime_context,
    mont_mul,
    mul_mod,
    neg_mod,
    ntt_forward_inplace,
    ntt_inverse_inplace,
    sub_mod,
)

_SER_MAGIC = b"FRE1"
_SER_VERSION = 1


@dataclass
class RingParams:
    """Ring degree plus the RNS modulus chain (and optional special prime)."""

    n: int
    chain: tuple[int, ...]
    special: int | None = None
    name: str = "custom"
    _ctx: dict[int, PrimeContext] = field(default_factory=dict, repr=False)
    _crt: dict[tuple[int, ...], tuple[int, tuple[int, ...]]] = field(
        default_factory=dict, repr=False
    )

    def __post_init__(self) -> None:
        if self.n < 4 or self.n & (self.n - 1):
            raise ParameterError(f"ring degree {self.n} must be a power of two >= 4")
        self.chain = tuple(int(q) for q in self.chain)
        if not self.chain:
            raise ParameterError("modulus chain is empty")
        all_primes = self.chain + ((self.special,) if self.special else ())
        if len(set(all_primes)) != len(all_primes):
            raise ParameterError("modulus chain contains duplicates")
        for q in all_primes:
            if q % (2 * self.n) != 1:
                raise ParameterError(f"modulus {q} is not 1 mod 2n (n={self.n})")
            if not is_prime(q):
                raise ParameterError(f"modulus {q} is not prime")
            self._ctx[q] = make_prime_context(q, self.n)

    # -- structure helpers ---------------------------------------------------

    @property
    def max_level(self) -> int:
        return len(self.chain) - 1

    def moduli(self, level: int, special: bool = False) -> tuple[int, ...]:
        if not 0 <= level <= self.max_level:
            raise LevelError(f"level {level} outside chain 0..{self.max_level}")
        mods = self.chain[: level + 1]
        if special:
            if self.special is None:
                raise LevelError("params define no special prime")
            mods = mods + (self.special,)
        return mods

    def ctx(self, q: int) -> PrimeContext:
        return self._ctx[q]

    def crt_constants(self, moduli: tuple[int, ...]) -> tuple[int, tuple[int, ...]]:
        """Product Q and the CRT idempotents e_i (e_i = 1 mod q_i, 0 elsewhere)."""
        cached = self._crt.get(moduli)
        if cached is None:
            big_q = 1
            for q in moduli:
                big_q *= q
            es = tuple(
                (big_q // q) * pow(big_q // q, -1, q) % big_q for q in moduli
            )
            cached = (big_q, es)
            self._crt[moduli] = cached
        return cached


@dataclass
class RingElement:
    params: RingParams
    data: np.ndarray  # (rows, n) uint64
    level: int
    special: bool = False
    ntt: bool = False

    def __post_init__(self) -> None:
        want = self.level + 1 + bool(self.special)
        if self.data.shape != (want, self.params.n):
            raise ParameterError(
                f"residue matrix shape {self.data.shape} != ({want}, {self.params.n})"
            )
        if self.data.dtype != np.uint64:
            raise ParameterError("residues must be uint64")

    # -- basics ----------------------------------------------------------------

    @property
    def moduli(self) -> tuple[int, ...]:
        return self.params.moduli(self.level, self.special)

    def copy(self) -> "RingElement":
        return RingElement(self.params, self.data.copy(), self.level, self.special, self.ntt)

    def _check_compat(self, other: "RingElement") -> None:
        if self.params is not other.params and self.moduli != other.moduli:
            raise ParameterError("ring elements live in different rings")
        if (self.level, self.special) != (other.level, other.special):
            raise LevelError(
                f"level mismatch: ({self.level},{self.special}) vs ({other.level},{other.special})"
            )
        if self.ntt != other.ntt:
            raise DomainError("cannot combine NTT-domain with coefficient-domain element")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, RingElement)
            and self.moduli == other.moduli
            and self.level == other.level
            and self.special == other.special
            and self.ntt == other.ntt
            and np.array_equal(self.data, other.data)
        )

    # -- arithmetic --------------------------------------------------------------

    def add(self, other: "RingElement") -> "RingElement":
        self._check_compat(other)
        out = np.empty_like(self.data)
        for i, q in enumerate(self.moduli):
            out[i] = add_mod(self.data[i], other.data[i], np.uint64(q))
        return RingElement(self.params, out, self.level, self.special, self.ntt)

    def sub(self, other: "RingElement") -> "RingElement":
        self._check_compat(other)
        out = np.empty_like(self.data)
        for i, q in enumerate(self.moduli):
            out[i] = sub_mod(self.data[i], other.data[i], np.uint64(q))
        return RingElement(self.params, out, self.level, self.special, self.ntt)

    def neg(self) -> "RingElement":
        out = np.empty_like(self.data)
        for i, q in enumerate(self.moduli):
            out[i] = neg_mod(self.data[i], np.uint64(q))
        return RingElement(self.params, out, self.level, self.special, self.ntt)

    def mul(self, other: "RingElement") -> "RingElement":
        """Pointwise product; both operands must be in NTT domain."""
        self._check_compat(other)
        if not self.ntt:
            raise DomainError("pointwise product requires NTT domain")
        out = np.empty_like(self.data)
        for i, q in enumerate(self.moduli):
            out[i] = mul_mod(self.data[i], other.data[i], self.params.ctx(q))
        return RingElement(self.params, out, self.level, self.special, True)

    def mul_scalar(self, c: int) -> "RingElement":
        """Multiply every coefficient by the integer c (any domain)."""
        out = np.empty_like(self.data)
        for i, q in enumerate(self.moduli):
            ctx = self.params.ctx(q)
            cm = np.array([ctx.to_mont(c % q)], dtype=np.uint64)
            out[i] = mont_mul(self.data[i], cm, ctx.q_u64, ctx.neg_qinv)
        return RingElement(self.params, out, self.level, self.special, self.ntt)

    # -- representation switches ---------------------------------------------------

    def to_ntt(self) -> "RingElement":
        if self.ntt:
            return self.copy()
        out = self.data.copy()
        for i, q in enumerate(self.moduli):
            ntt_forward_inplace(out[i], self.params.ctx(q))
        return RingElement(self.params, out, self.level, self.special, True)

    def to_coeff(self) -> "RingElement":
        if not self.ntt:
            return self.copy()
        out = self.data.copy()
        for i, q in enumerate(self.moduli):
            ntt_inverse_inplace(out[i], self.params.ctx(q))
        return RingElement(self.params, out, self.level, self.special, False)

    # -- modulus management ----------------------------------------------------------

    def mod_reduce_to(self, level: int, special: bool = False) -> "RingElement":
        """Drop residue rows (exact modulus reduction; scale is unchanged)."""
        if level > self.level or (special and not self.special):
            raise LevelError("mod_reduce_to can only drop moduli")
        rows = list(range(level + 1))
        if special:
            rows.append(self.data.shape[0] - 1)
        return RingElement(
            self.params, np.ascontiguousarray(self.data[rows]), level, special, self.ntt
        )

    def drop_last_modulus(self) -> "RingElement":
        """Exact divide-and-round by the last active modulus (coefficient domain).

        Computes round(x / q_last) residue-wise: y_j = (x_j - [x]_q_last) / q_last
        with the centered remainder, which is exact in RNS.
        """
        if self.ntt:
            raise DomainError("rescaling works on coefficient-domain elements")
        mods = self.moduli
        if len(mods) == 1:
            raise LevelError("modulus chain exhausted; nothing left to drop")
        q_last = mods[-1]
        last = self.data[-1]
        half = np.uint64(q_last // 2)
        out = np.empty((len(mods) - 1, self.params.n), dtype=np.uint64)
        big = last > half
        for j, q in enumerate(mods[:-1]):
            ctx = self.params.ctx(q)
            qj = np.uint64(q)
            base = sub_mod(self.data[j], last % qj, qj)
            fixed = np.where(big, add_mod(base, np.uint64(q_last % q), qj), base)
            inv = np.array([ctx.to_mont(pow(q_last, -1, q))], dtype=np.uint64)
            out[j] = mont_mul(fixed, inv, ctx.q_u64, ctx.neg_qinv)
        if self.special:
            return RingElement(self.params, out, self.level, False, False)
        return RingElement(self.params, out, self.level - 1, False, False)

    # -- integer views ------------------------------------------------------------------

    def to_int_coeffs(self, indices=None) -> np.ndarray:
        """Centered CRT lift to Python integers (coefficient domain)."""
        if self.ntt:
            raise DomainError("integer lift requires coefficient domain")
        mods = self.moduli
        big_q, es = self.params.crt_constants(mods)
        cols = self.data if indices is None else self.data[:, indices]
        acc = np.zeros(cols.shape[1], dtype=object)
        for row, e in zip(cols, es):
            acc = acc + row.astype(object) * e
        acc = acc % big_q
        return np.where(acc > big_q // 2, acc - big_q, acc)

    @classmethod
    def from_int_coeffs(
        cls,
        params: RingParams,
        values,
        level: int,
        special: bool = False,
    ) -> "RingElement":
        """Build an element from (possibly huge, possibly negative) integers."""
        mods = params.moduli(level, special)
        vals = np.asarray(values, dtype=object)
        if vals.shape != (params.n,):
            raise ParameterError(f"expected {params.n} coefficients, got {vals.shape}")
        out = np.empty((len(mods), params.n), dtype=np.uint64)
        mx = max((abs(int(v)) for v in vals.flat), default=0)
        if mx < (1 << 62):
            v64 = vals.astype(np.int64)
            for i, q in enumerate(mods):
                out[i] = np.mod(v64, np.int64(q)).astype(np.uint64)
        else:
            for i, q in enumerate(mods):
                out[i] = (vals % q).astype(np.uint64)
        return cls(params, out, level, special, False)

    @classmethod
    def zeros(
        cls, params: RingParams, level: int, special: bool = False, ntt: bool = False
    ) -> "RingElement":
        rows = level + 1 + bool(special)
        return cls(params, np.zeros((rows, params.n), dtype=np.uint64), level, special, ntt)

    # -- serialization (versioned: magic, n, prime list, LE u64 residues) -----------------

    def to_bytes(self) -> bytes:
        mods = self.moduli
        flags = (1 if self.ntt else 0) | (2 if self.special else 0)
        head = struct.pack(
            "<4sBBBI B",
            _SER_MAGIC,
            _SER_VERSION,
            flags,
            self.level,
            self.params.n,
            len(mods),
        )
        body = struct.pack(f"<{len(mods)}Q", *mods)
        payload = self.data.astype("<u8").tobytes()
        return head + body + payload

    @classmethod
    def from_bytes(cls, buf: bytes, params: RingParams | None = None) -> "RingElement":
        head_fmt = "<4sBBBI B"
        head_len = struct.calcsize(head_fmt)
        if len(buf) < head_len:
            raise SerializationError(f"truncated header: {len(buf)} < {head_len} bytes")
        magic, version, flags, level, n, k = struct.unpack_from(head_fmt, buf)
        if magic != _SER_MAGIC:
            raise SerializationError(f"bad magic {magic!r}, expected {_SER_MAGIC!r}")
        if version != _SER_VERSION:
            raise SerializationError(f"unsupported version {version}")
        off = head_len
        if len(buf) < off + 8 * k:
            raise SerializationError("truncated modulus list")
        mods = struct.unpack_from(f"<{k}Q", buf, off)
        off += 8 * k
        need = off + 8 * k * n
        if len(buf) != need:
            raise SerializationError(f"payload length {len(buf)} != expected {need}")
        ntt = bool(flags & 1)
        special = bool(flags & 2)
        if params is not None:
            if params.n != n:
                raise SerializationError(f"ring degree mismatch: {n} != {params.n}")
            try:
                expected = params.moduli(level, special)
            except LevelError as exc:
                raise SerializationError(f"modulus count mismatch: {exc}") from exc
            if tuple(mods) != expected:
                raise SerializationError("modulus list does not match target params")
        else:
            chain = mods[:-1] if special else mods
            params = RingParams(n=n, chain=tuple(chain), special=mods[-1] if special else None)
        data = np.frombuffer(buf, dtype="<u8", offset=off).reshape(k, n).astype(np.uint64)
        return cls(params, data, level, special, ntt)


# ---------------------------------------------------------------------------
# module-level op aliases
# ---------------------------------------------------------------------------


def ring_add(a: RingElement, b: RingElement) -> RingElement:
    return a.add(b)


def ring_mul(a: RingElement, b: RingElement) -> RingElement:
    """Negacyclic product; accepts a matching pair in either domain."""
    if a.ntt != b.ntt:
        raise DomainError("ring_mul operands must share a representation")
    if a.ntt:
        return a.mul(b)
    return a.to_ntt().mul(b.to_ntt()).to_coeff()


def ntt_forward(x: RingElement) -> RingElement:
    if x.ntt:
        raise DomainError("element already in NTT domain")
    return x.to_ntt()


def ntt_inverse(x: RingElement) -> RingElement:
    if not x.ntt:
        raise DomainError("element already in coefficient domain")
    return x.to_coeff()


def drop_level(x: RingElement) -> RingElement:
    """Exact RNS rescale: divide-and-round by the last active modulus."""
    return x.drop_last_modulus()


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def _seed_bytes(seed) -> bytes:
    if isinstance(seed, bytes):
        return seed
    if isinstance(seed, str):
        return seed.encode()
    if isinstance(seed, int):
        return seed.to_bytes(16, "little", signed=False)
    raise ParameterError(f"unsupported seed type {type(seed)!r}")


def _shake_words(seed: bytes, count: int) -> np.ndarray:
    """First ``count`` uint64 words of the SHAKE-256 stream for ``seed``."""
    raw = hashlib.shake_256(seed).digest(8 * count)
    return np.frombuffer(raw, dtype="<u8").astype(np.uint64)


def sample_uniform(
    params: RingParams,
    seed,
    *,
    level: int | None = None,
    special: bool = False,
    ntt: bool = False,
    tag: bytes = b"",
) -> RingElement:
    """Deterministic uniform element from a SHAKE-256 stream (rejection sampled).

    The same (seed, tag) always yields the same element, which is what lets
    every party derive the shared public polynomial for a round.
    """
    if level is None:
        level = params.max_level
    mods = params.moduli(level, special)
    seed_b = _seed_bytes(seed) + b"|" + tag
    n = params.n
    rows = np.empty((len(mods), n), dtype=np.uint64)
    # acceptance is >= 1/2 for any q < 2^62, so 3x oversampling makes a refill
    # essentially impossible; the loop keeps determinism regardless.
    budget = 3 * len(mods) * n + 16
    words = _shake_words(seed_b, budget)
    pos = 0
    for i, q in enumerate(mods):
        bound = np.uint64((2**64 // q) * q)
        got = 0
        while got < n:
            if pos >= len(words):
                budget *= 2
                words = _shake_words(seed_b, budget)
            chunk = words[pos:]
            keep = chunk[chunk < bound]
            take = min(n - got, len(keep))
            rows[i, got : got + take] = keep[:take] % np.uint64(q)
            # advance past exactly the words that produced `take` accepted ones
            if take == len(keep):
                pos = len(words)
            else:
                used = int(np.searchsorted(np.cumsum(chunk < bound), take))
                pos += used + 1
            got += take
    return RingElement(params, rows, level, special, ntt)


def sample_ternary(
    params: RingParams,
    seed,
    *,
    level: int | None = None,
    special: bool = True,
    tag: bytes = b"",
) -> RingElement:
    """Deterministic ternary element with entries in {-1, 0, 1} (coefficient domain)."""
    if level is None:
        level = params.max_level
    seed_b = _seed_bytes(seed) + b"|ter|" + tag
    n = params.n
    need = 2 * n + 16
    raw = hashlib.shake_256(seed_b).digest(need)
    vals = np.frombuffer(raw, dtype=np.uint8)
    vals = vals[vals < 255][:n]
    while len(vals) < n:  # pragma: no cover - astronomically unlikely refill
        need *= 2
        raw = hashlib.shake_256(seed_b).digest(need)
        vals = np.frombuffer(raw, dtype=np.uint8)
        vals = vals[vals < 255][:n]
    signed = vals.astype(np.int64) % 3 - 1
    return _from_small_ints(params, signed, level, special)


def sample_error(
    params: RingParams,
    rng: np.random.Generator,
    sigma: float,
    *,
    level: int | None = None,
    special: bool = False,
) -> RingElement:
    """Rounded-Gaussian error polynomial (coefficient domain)."""
    if level is None:
        level = params.max_level
    vals = np.rint(rng.normal(0.0, sigma, params.n)).astype(np.int64)
    return _from_small_ints(params, vals, level, special)


def _from_small_ints(
    params: RingParams, vals: np.ndarray, level: int, special: bool
) -> RingElement:
    mods = params.moduli(level, special)
    out = np.empty((len(mods), params.n), dtype=np.uint64)
    for i, q in enumerate(mods):
        out[i] = np.mod(vals, np.int64(q)).astype(np.uint64)
    return RingElement(params, out, level, special, False)
