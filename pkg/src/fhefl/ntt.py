"""Negacyclic number-theoretic transform over word-sized primes.

All heavy arithmetic in the package bottoms out here.  Residues are stored as
``numpy.uint64`` and multiplied with a vectorized Montgomery reduction built
from 32-bit limbs, so the whole thing stays exact for any odd modulus below
2^62 without bignum fallbacks in the hot path.

The transform is the standard ψ-twisted (negacyclic) NTT for the ring
Z_q[X]/(X^n + 1): the forward pass is a Cooley-Tukey decimation-in-time that
consumes coefficients in standard order and produces evaluations in
bit-reversed order, the inverse is the matching Gentleman-Sande pass.  Since
every pointwise operation is order-agnostic we never bit-reverse explicitly;
"NTT domain" throughout the package means this bit-reversed evaluation order.

Twiddle tables hold ψ^brv(i) (respectively ψ^-brv(i)) in Montgomery form,
which makes every butterfly a single Montgomery multiply.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_WORD = 1 << 64

# ---------------------------------------------------------------------------
# modular helpers (all inputs reduced mod q, q < 2^62)
# ---------------------------------------------------------------------------


def add_mod(a, b, q):
    s = a + b
    return np.where(s >= q, s - q, s)


def sub_mod(a, b, q):
    d = a + q - b
    return np.where(d >= q, d - q, d)


def neg_mod(a, q):
    return np.where(a == 0, np.uint64(0), q - a)


def mont_mul(a, b, q, neg_qinv):
    """Montgomery product a*b*2^-64 mod q, elementwise with broadcasting.

    If ``b`` is kept in Montgomery form (b*2^64 mod q) the result is the plain
    product a*b mod q.  All operands must already be reduced mod q.
    """
    a_lo = a & _MASK32
    a_hi = a >> _SHIFT32
    b_lo = b & _MASK32
    b_hi = b >> _SHIFT32

    ll = a_lo * b_lo
    mid = a_lo * b_hi + (ll >> _SHIFT32)
    hl = a_hi * b_lo
    mid2 = mid + hl
    carry = (mid2 < hl).astype(np.uint64)
    t_hi = a_hi * b_hi + (mid2 >> _SHIFT32) + (carry << _SHIFT32)
    t_lo = (mid2 << _SHIFT32) + (ll & _MASK32)

    m = t_lo * neg_qinv  # wraps mod 2^64, by design
    m_lo = m & _MASK32
    m_hi = m >> _SHIFT32
    q_lo = q & _MASK32
    q_hi = q >> _SHIFT32

    ll2 = m_lo * q_lo
    mid3 = m_lo * q_hi + (ll2 >> _SHIFT32)
    hl2 = m_hi * q_lo
    mid4 = mid3 + hl2
    carry2 = (mid4 < hl2).astype(np.uint64)
    mq_hi = m_hi * q_hi + (mid4 >> _SHIFT32) + (carry2 << _SHIFT32)

    # t_lo + (m*q mod 2^64) == 0 mod 2^64 by construction, so the carry out of
    # the low word is 1 exactly when t_lo != 0.
    res = t_hi + mq_hi + (t_lo != 0).astype(np.uint64)
    return np.where(res >= q, res - q, res)


def mul_mod(a, b, ctx: "PrimeContext"):
    """Plain modular product of two standard-form arrays."""
    t = mont_mul(a, b, ctx.q_u64, ctx.neg_qinv)
    return mont_mul(t, ctx.r2_u64, ctx.q_u64, ctx.neg_qinv)


# ---------------------------------------------------------------------------
# primality / root finding
# ---------------------------------------------------------------------------

_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime(m: int) -> bool:
    """Deterministic Miller-Rabin, valid for all m < 3.3e24."""
    if m < 2:
        return False
    for p in _MR_BASES:
        if m % p == 0:
            return m == p
    d = m - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_BASES:
        x = pow(a, d, m)
        if x in (1, m - 1):
            continue
        for _ in range(r - 1):
            x = x * x % m
            if x == m - 1:
                break
        else:
            return False
    return True


def find_ntt_primes(n: int, bits: int, count: int, avoid=()) -> list[int]:
    """Largest ``count`` primes of exactly ``bits`` bits with q = 1 mod 2n."""
    step = 2 * n
    found: list[int] = []
    avoid = set(avoid)
    cand = (1 << bits) - 1
    cand -= (cand - 1) % step
    while len(found) < count:
        if cand < (1 << (bits - 1)):
            raise ValueError(f"not enough {bits}-bit NTT primes for n={n}")
        if cand not in avoid and is_prime(cand):
            found.append(cand)
        cand -= step
    return found


def _primitive_2n_root(q: int, n: int) -> int:
    if (q - 1) % (2 * n) != 0:
        raise ValueError(f"q={q} is not 1 mod 2n (n={n})")
    for g in range(2, q):
        cand = pow(g, (q - 1) // (2 * n), q)
        if cand != 1 and pow(cand, n, q) == q - 1:
            return cand
    raise ValueError(f"no 2n-th root of unity mod {q}")


def _bit_reverse_indices(n: int) -> list[int]:
    bits = n.bit_length() - 1
    out = [0] * n
    for i in range(n):
        out[i] = int(bin(i)[2:].zfill(bits)[::-1], 2) if bits else 0
    return out


# ---------------------------------------------------------------------------
# per-prime transform context
# ---------------------------------------------------------------------------


@dataclass
class PrimeContext:
    """Precomputed constants for one prime of one ring degree."""

    q: int
    n: int
    q_u64: np.uint64
    neg_qinv: np.uint64
    r2_u64: np.uint64
    fwd_twiddles: np.ndarray  # psi^brv(i), Montgomery form
    inv_twiddles: np.ndarray  # psi^-brv(i), Montgomery form
    n_inv_mont: np.ndarray  # n^-1, Montgomery form, shape (1,)

    def to_mont(self, x: int) -> int:
        return (x << 64) % self.q


def make_prime_context(q: int, n: int) -> PrimeContext:
    if q % 2 == 0 or q >= (1 << 62):
        raise ValueError(f"modulus {q} out of supported range (odd, < 2^62)")
    psi = _primitive_2n_root(q, n)
    psi_inv = pow(psi, -1, q)
    brv = _bit_reverse_indices(n)

    def mont(x: int) -> int:
        return (x << 64) % q

    fwd = np.array([mont(pow(psi, brv[i], q)) for i in range(n)], dtype=np.uint64)
    inv = np.array([mont(pow(psi_inv, brv[i], q)) for i in range(n)], dtype=np.uint64)
    return PrimeContext(
        q=q,
        n=n,
        q_u64=np.uint64(q),
        neg_qinv=np.uint64((-pow(q, -1, _WORD)) % _WORD),
        r2_u64=np.uint64((1 << 128) % q),
        fwd_twiddles=fwd,
        inv_twiddles=inv,
        n_inv_mont=np.array([mont(pow(n, -1, q))], dtype=np.uint64),
    )


def ntt_forward_inplace(a: np.ndarray, ctx: PrimeContext) -> None:
    """Standard-order coefficients -> bit-reversed negacyclic evaluations."""
    n, q, ninv = ctx.n, ctx.q_u64, ctx.neg_qinv
    t = n
    m = 1
    while m < n:
        t >>= 1
        s = ctx.fwd_twiddles[m : 2 * m, None]
        blk = a.reshape(m, 2 * t)
        u = blk[:, :t]
        v = mont_mul(blk[:, t:], s, q, ninv)
        hi = add_mod(u, v, q)
        lo = sub_mod(u, v, q)
        blk[:, :t] = hi
        blk[:, t:] = lo
        m <<= 1


def ntt_inverse_inplace(a: np.ndarray, ctx: PrimeContext) -> None:
    """Bit-reversed negacyclic evaluations -> standard-order coefficients."""
    n, q, ninv = ctx.n, ctx.q_u64, ctx.neg_qinv
    t = 1
    m = n
    while m > 1:
        h = m >> 1
        s = ctx.inv_twiddles[h:m, None]
        blk = a.reshape(h, 2 * t)
        u = blk[:, :t]
        v = blk[:, t:]
        hi = add_mod(u, v, q)
        lo = mont_mul(sub_mod(u, v, q), s, q, ninv)
        blk[:, :t] = hi
        blk[:, t:] = lo
        t <<= 1
        m = h
    a[:] = mont_mul(a, ctx.n_inv_mont, q, ninv)
