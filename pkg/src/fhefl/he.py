"""Symmetric leveled HE on the negacyclic ring with fixed-point coefficient packing.

Encryption follows the additive-mask form ``c0 = a*s + m + e, c1 = a`` with a
*shared* public polynomial ``a`` per round, so fresh ciphertexts from different
users can be aggregated by summing the ``c0`` parts against a summed key.
Decryption is the phase ``c0 - c1*s`` (plus ``+ c2*s^2`` for unrelinearized
three-component products).

Packing is by coefficients, not slots: a vector ``v`` sits at coefficients
``0..len-1`` (forward) or mirrored (reversed).  There are no rotation keys;
inner products come from the forward*reversed product instead, whose
coefficient ``len-1`` is exactly ``sum(v_k^2)``.

Multiplication produces scale ``s1*s2`` and is followed by an exact RNS
rescale that divides by the dropped prime.  Relinearization decomposes the
quadratic component into its per-prime RNS digits and key-switches them with
one evaluation-key pair per chain prime over the special-prime extension —
the standard word-sized realization of dividing by a large public ``p``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    EncodingError,
    LevelError,
    ParameterError,
    SerializationError,
)
from .ring import (
    RingElement,
    RingParams,
    find_ntt_primes,
    sample_error,
    sample_ternary,
    sample_uniform,
)

_CT_MAGIC = b"FCT1"
_CT_VERSION = 1


@dataclass
class HeParams:
    """Scheme parameters: ring, fixed-point scale, noise width."""

    ring: RingParams
    scale_bits: int
    sigma: float = 3.2
    name: str = "custom"
    logq_budget: int | None = None  # security-standard modulus budget, if pinned
    flood_sigma_bits: int = 20  # partial-decryption flooding: sigma * 2^this
    check_noise: bool = False

    @property
    def scale(self) -> float:
        return float(1 << self.scale_bits)

    @property
    def capacity(self) -> int:
        """Packable vector length: half the ring degree (the product of a
        forward/reversed pair of full-capacity vectors must not wrap)."""
        return self.ring.n // 2

    @property
    def depth(self) -> int:
        return self.ring.max_level

    def chain_bits(self) -> list[int]:
        return [q.bit_length() for q in self.ring.chain]

    def total_logq(self) -> int:
        bits = sum(self.chain_bits())
        if self.ring.special:
            bits += self.ring.special.bit_length()
        return bits


# ---------------------------------------------------------------------------
# preset registry
# ---------------------------------------------------------------------------

_PRESET_SPECS: dict[str, dict] = {
    # name: n, (q0 bits, mid bits, #mids, special bits), scale bits, budget
    "test-16": dict(n=16, q0=53, mid=41, mids=2, special=53, scale=40, budget=None),
    "test-1024": dict(n=1024, q0=53, mid=41, mids=3, special=53, scale=40, budget=None),
    "fhefl-8192": dict(n=8192, q0=54, mid=26, mids=4, special=60, scale=25, budget=218),
    "fhefl-16384": dict(n=16384, q0=61, mid=60, mids=4, special=61, scale=60, budget=438),
}

_PRESET_CACHE: dict[str, HeParams] = {}


def preset_names() -> list[str]:
    return list(_PRESET_SPECS)


def get_params(name: str) -> HeParams:
    """Look up a named parameter preset (built once, then cached)."""
    if name not in _PRESET_SPECS:
        known = ", ".join(preset_names())
        raise ParameterError(f"unknown preset {name!r}; known presets: {known}")
    if name not in _PRESET_CACHE:
        spec = _PRESET_SPECS[name]
        n = spec["n"]
        used: list[int] = []
        if spec["special"] == spec["q0"]:
            sp, q0 = find_ntt_primes(n, spec["q0"], 2)
            used += [sp, q0]
        else:
            q0 = find_ntt_primes(n, spec["q0"], 1)[0]
            sp = find_ntt_primes(n, spec["special"], 1, avoid=[q0])[0]
            used += [q0, sp]
        mids = find_ntt_primes(n, spec["mid"], spec["mids"], avoid=used)
        ring = RingParams(n=n, chain=(q0, *mids), special=sp, name=name)
        _PRESET_CACHE[name] = HeParams(
            ring=ring,
            scale_bits=spec["scale"],
            name=name,
            logq_budget=spec["budget"],
        )
    return _PRESET_CACHE[name]


# ---------------------------------------------------------------------------
# plaintext packing
# ---------------------------------------------------------------------------


@dataclass
class PlainVector:
    """A packed real vector plus its packing direction."""

    values: np.ndarray
    direction: str = "forward"

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size == 0:
            raise EncodingError("packed vectors must be non-empty and 1-d")
        if self.direction not in ("forward", "reversed"):
            raise EncodingError(f"unknown packing direction {self.direction!r}")


def encode(
    params: HeParams,
    values,
    level: int | None = None,
    *,
    scale: float | None = None,
    direction: str = "forward",
) -> RingElement:
    """Fixed-point packing: coefficient k (forward) or len-1-k (reversed)
    holds round(scale * v_k)."""
    pv = values if isinstance(values, PlainVector) else PlainVector(values, direction)
    ring = params.ring
    level = ring.max_level if level is None else level
    scale = params.scale if scale is None else float(scale)
    m = pv.values.size
    if m > params.capacity:
        raise EncodingError(
            f"vector of length {m} exceeds packing capacity {params.capacity}"
        )
    ints = [int(round(scale * float(v))) for v in pv.values]
    big_q, _ = ring.crt_constants(ring.moduli(level))
    bound = big_q // 2
    worst = max((abs(x) for x in ints), default=0)
    if worst >= bound:
        raise EncodingError(
            f"encoded magnitude 2^{worst.bit_length()} overflows modulus headroom "
            f"2^{bound.bit_length() - 1} at level {level}"
        )
    coeffs = [0] * ring.n
    for k, x in enumerate(ints):
        idx = k if pv.direction == "forward" else m - 1 - k
        coeffs[idx] = x
    return RingElement.from_int_coeffs(ring, coeffs, level)


def decode(
    elem: RingElement,
    scale: float,
    length: int,
    direction: str = "forward",
) -> np.ndarray:
    """Centered lift of the first ``length`` coefficients divided by the scale."""
    ints = elem.to_int_coeffs(indices=np.arange(length))
    vals = np.array([float(int(x)) / scale for x in ints], dtype=np.float64)
    if direction == "reversed":
        vals = vals[::-1]
    return vals


# ---------------------------------------------------------------------------
# keys
# ---------------------------------------------------------------------------


@dataclass
class SecretKey:
    """Ternary secret in NTT form over the full basis (chain + special prime)."""

    s: RingElement

    @classmethod
    def generate(cls, params: HeParams, seed) -> "SecretKey":
        s = sample_ternary(params.ring, seed, special=True)
        return cls(s=s.to_ntt())


@dataclass
class EvalKey:
    """Relinearization key: one (b_i, a_i) pair per chain prime.

    b_i = a_i*s + e_i + P_i*s^2 over the extended basis, where P_i is the
    special prime carried on chain row i only (p * CRT idempotent).  Key
    switching then needs just the RNS digits of the quadratic component.
    """

    ks_b: tuple[RingElement, ...]
    ks_a: tuple[RingElement, ...]

    @classmethod
    def generate(cls, params: HeParams, sk: SecretKey, rng: np.random.Generator) -> "EvalKey":
        ring = params.ring
        if ring.special is None:
            raise ParameterError("relinearization keys need a special prime")
        top = ring.max_level
        s = sk.s
        s2 = s.mul(s)
        bs, a_s = [], []
        for i in range(top + 1):
            seed = rng.bytes(16)
            a_i = sample_uniform(ring, seed, special=True, ntt=True, tag=b"evk-a")
            e_i = sample_error(ring, rng, params.sigma, special=True).to_ntt()
            # P_i: residue (p mod q_i) on chain row i, zero elsewhere (incl. the
            # special row, since p = 0 mod p)
            p_i = RingElement.zeros(ring, top, special=True, ntt=True)
            p_i.data[i, :] = np.uint64(ring.special % ring.chain[i])
            b_i = a_i.mul(s).add(e_i).add(p_i.mul(s2))
            bs.append(b_i)
            a_s.append(a_i)
        return cls(ks_b=tuple(bs), ks_a=tuple(a_s))


def common_poly(params: HeParams, seed, level: int | None = None) -> RingElement:
    """The shared public polynomial a for one round of fresh encryptions."""
    return sample_uniform(params.ring, seed, level=level, ntt=True, tag=b"common-a")


# ---------------------------------------------------------------------------
# ciphertexts
# ---------------------------------------------------------------------------


@dataclass
class Ciphertext:
    params: HeParams
    comps: tuple[RingElement, ...]
    level: int
    scale: float
    length: int
    direction: str = "forward"
    noise_log2: float = 0.0  # heuristic upper-bound tracker, coefficient units
    msg_bound: float = 1.0

    def copy(self) -> "Ciphertext":
        return replace(self, comps=tuple(c.copy() for c in self.comps))

    @property
    def c0(self) -> RingElement:
        return self.comps[0]

    @property
    def c1(self) -> RingElement:
        return self.comps[1]

    def mod_reduce_to(self, level: int) -> "Ciphertext":
        """Drop chain primes without rescaling (scale untouched, exact)."""
        comps = tuple(c.mod_reduce_to(level) for c in self.comps)
        return replace(self, comps=comps, level=level)


def _log2_add(a: float, b: float) -> float:
    hi, lo = (a, b) if a >= b else (b, a)
    return hi + math.log2(1.0 + 2.0 ** (lo - hi))


def encrypt(
    params: HeParams,
    values,
    sk: SecretKey,
    a: RingElement,
    rng: np.random.Generator,
    *,
    level: int | None = None,
    scale: float | None = None,
    direction: str = "forward",
) -> Ciphertext:
    ring = params.ring
    level = ring.max_level if level is None else level
    scale = params.scale if scale is None else float(scale)
    pv = values if isinstance(values, PlainVector) else PlainVector(values, direction)
    m = encode(params, pv, level, scale=scale).to_ntt()
    if a.level != level or a.special or not a.ntt:
        a = a.mod_reduce_to(level).to_ntt() if not a.ntt else a.mod_reduce_to(level)
    e = sample_error(ring, rng, params.sigma, level=level).to_ntt()
    s_l = sk.s.mod_reduce_to(level)
    c0 = a.mul(s_l).add(m).add(e)
    return Ciphertext(
        params=params,
        comps=(c0, a.copy()),
        level=level,
        scale=scale,
        length=pv.values.size,
        direction=pv.direction,
        noise_log2=math.log2(6 * params.sigma + 0.5),
        msg_bound=float(np.abs(pv.values).max()),
    )


def decrypt(ct: Ciphertext, sk: SecretKey) -> PlainVector:
    """Phase decryption; handles two- and three-component ciphertexts."""
    if ct.params.check_noise and ct.noise_log2 > math.log2(ct.scale) - 1:
        raise EncodingError(
            f"tracked noise 2^{ct.noise_log2:.1f} exceeds half the scale "
            f"2^{math.log2(ct.scale):.1f}; precision has collapsed"
        )
    s = sk.s.mod_reduce_to(ct.level)
    phase = ct.comps[0]
    s_pow = s
    for k, comp in enumerate(ct.comps[1:], start=1):
        term = comp.mul(s_pow)
        phase = phase.sub(term) if k % 2 == 1 else phase.add(term)
        if k < len(ct.comps) - 1:
            s_pow = s_pow.mul(s)
    vals = decode(phase.to_coeff(), ct.scale, ct.length, ct.direction)
    return PlainVector(vals, ct.direction)


def he_add(x: Ciphertext, y: Ciphertext) -> Ciphertext:
    """Component-wise sum; levels auto-align by exact modulus reduction."""
    if x.level != y.level:
        tgt = min(x.level, y.level)
        x, y = x.mod_reduce_to(tgt), y.mod_reduce_to(tgt)
    if not math.isclose(x.scale, y.scale, rel_tol=1e-6):
        raise LevelError(f"scale mismatch in addition: {x.scale} vs {y.scale}")
    if len(x.comps) != len(y.comps):
        raise LevelError("component count mismatch; relinearize before adding")
    if (x.length, x.direction) != (y.length, y.direction):
        raise EncodingError("packed length/direction mismatch in addition")
    comps = tuple(a.add(b) for a, b in zip(x.comps, y.comps))
    return replace(
        x,
        comps=comps,
        noise_log2=_log2_add(x.noise_log2, y.noise_log2),
        msg_bound=x.msg_bound + y.msg_bound,
    )


def _he_mult_raw(x: Ciphertext, y: Ciphertext) -> Ciphertext:
    """Tensor product -> three components (d0, d1, d2), scale multiplied."""
    if len(x.comps) != 2 or len(y.comps) != 2:
        raise LevelError("three-component operands must be relinearized first")
    if x.level != y.level:
        raise LevelError(
            f"multiplication needs aligned levels ({x.level} vs {y.level}); "
            "mod-reduce the fresher operand first"
        )
    if x.level < 1:
        raise LevelError("no levels left for multiplication")
    n = x.params.ring.n
    out_len = x.length + y.length - 1
    if out_len > n:
        raise EncodingError(f"product length {out_len} wraps the ring degree {n}")
    x0, x1 = x.comps
    y0, y1 = y.comps
    d0 = x0.mul(y0)
    d1 = x0.mul(y1).add(x1.mul(y0))
    d2 = x1.mul(y1)
    root_n = math.log2(n) / 2
    nz = _log2_add(
        x.noise_log2 + math.log2(max(y.scale * y.msg_bound, 1.0)),
        y.noise_log2 + math.log2(max(x.scale * x.msg_bound, 1.0)),
    )
    nz = _log2_add(nz, x.noise_log2 + y.noise_log2) + root_n
    return Ciphertext(
        params=x.params,
        comps=(d0, d1, d2),
        level=x.level,
        scale=x.scale * y.scale,
        length=out_len,
        direction="forward" if "forward" in (x.direction, y.direction) else "reversed",
        noise_log2=nz,
        msg_bound=x.msg_bound * y.msg_bound * min(x.length, y.length),
    )


def _key_switch_quadratic(d2: RingElement, evk: EvalKey, params: HeParams):
    """RNS-digit key switch of a quadratic component back to (u0, u1).

    u0 - u1*s = d2*s^2 + p^-1 * sum_i digit_i * e_i  (mod the active chain),
    realized by multiplying each digit against its key pair over the extended
    basis and exactly divide-and-rounding by the special prime.
    """
    ring = params.ring
    level = d2.level
    d2c = d2.to_coeff()
    acc0 = RingElement.zeros(ring, level, special=True, ntt=True)
    acc1 = RingElement.zeros(ring, level, special=True, ntt=True)
    mods = ring.moduli(level, special=True)
    for i in range(level + 1):
        digit = d2c.data[i]
        ext = np.empty((len(mods), ring.n), dtype=np.uint64)
        for j, qj in enumerate(mods):
            ext[j] = digit % np.uint64(qj)
        ext_el = RingElement(ring, ext, level, special=True, ntt=False).to_ntt()
        acc0 = acc0.add(ext_el.mul(evk.ks_b[i].mod_reduce_to(level, special=True)))
        acc1 = acc1.add(ext_el.mul(evk.ks_a[i].mod_reduce_to(level, special=True)))
    u0 = acc0.to_coeff().drop_last_modulus().to_ntt()
    u1 = acc1.to_coeff().drop_last_modulus().to_ntt()
    return u0, u1


def relinearize(ct: Ciphertext, evk: EvalKey) -> Ciphertext:
    if len(ct.comps) != 3:
        raise LevelError("relinearize expects a three-component ciphertext")
    d0, d1, d2 = ct.comps
    u0, u1 = _key_switch_quadratic(d2, evk, ct.params)
    ring = ct.params.ring
    ks_noise = (
        math.log2(ct.level + 1)
        + math.log2(ring.n) / 2
        + math.log2(max(ring.chain))
        + math.log2(6 * ct.params.sigma)
        - math.log2(ring.special)
    )
    return replace(
        ct,
        comps=(d0.add(u0), d1.add(u1)),
        noise_log2=_log2_add(ct.noise_log2, ks_noise),
    )


def rescale(ct: Ciphertext) -> Ciphertext:
    """Exact divide-and-round by the last chain prime; scale divides with it."""
    q_last = ct.params.ring.chain[ct.level]
    comps = tuple(
        c.to_coeff().drop_last_modulus().to_ntt() for c in ct.comps
    )
    nz = _log2_add(
        ct.noise_log2 - math.log2(q_last),
        math.log2(ct.params.ring.n) / 2 + 1.0,  # rounding folded through the key
    )
    return replace(ct, comps=comps, level=ct.level - 1, scale=ct.scale / q_last, noise_log2=nz)


def he_mult_relin(x: Ciphertext, y: Ciphertext, evk: EvalKey) -> Ciphertext:
    """Full product: tensor, relinearize, rescale."""
    return rescale(relinearize(_he_mult_raw(x, y), evk))


def plain_affine(
    ct: Ciphertext,
    mult: float,
    add: float,
    *,
    add_index: int = 0,
) -> Ciphertext:
    """Homomorphic mult*x + add with plaintext scalars.

    The multiplicative constant scales every packed coefficient; the additive
    constant lands on ``add_index`` (the readout coefficient of the value of
    interest — 0 for plain scalars, chunk_len-1 for norm ciphertexts).
    Costs one level.
    """
    if len(ct.comps) != 2:
        raise LevelError("plain_affine expects a relinearized ciphertext")
    if ct.level < 1:
        raise LevelError("no levels left for the affine rescale")
    params = ct.params
    ring = params.ring
    pm = encode(params, [mult], ct.level).to_ntt()
    comps = tuple(c.mul(pm) for c in ct.comps)
    mid = replace(
        ct,
        comps=comps,
        scale=ct.scale * params.scale,
        noise_log2=ct.noise_log2 + params.scale_bits + math.log2(max(abs(mult), 2**-params.scale_bits)),
        msg_bound=ct.msg_bound * max(abs(mult), 1e-300),
    )
    out = rescale(mid)
    if add != 0.0:
        if not 0 <= add_index < ring.n:
            raise EncodingError(f"add_index {add_index} outside ring degree")
        coeffs = [0] * ring.n
        coeffs[add_index] = int(round(add * out.scale))
        pa = RingElement.from_int_coeffs(ring, coeffs, out.level).to_ntt()
        out = replace(
            out,
            comps=(out.comps[0].add(pa), out.comps[1]),
            noise_log2=_log2_add(out.noise_log2, -1.0),
            msg_bound=out.msg_bound + abs(add),
        )
    return out


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def ciphertext_to_bytes(ct: Ciphertext) -> bytes:
    name = ct.params.name.encode()
    dir_flag = 0 if ct.direction == "forward" else 1
    head = struct.pack(
        "<4sBB", _CT_MAGIC, _CT_VERSION, len(name)
    ) + name + struct.pack(
        "<BBBId", ct.level, len(ct.comps), dir_flag, ct.length, ct.scale
    )
    blobs = [c.to_bytes() for c in ct.comps]
    body = b"".join(struct.pack("<I", len(b)) + b for b in blobs)
    return head + body


def ciphertext_from_bytes(buf: bytes, params: HeParams | None = None) -> Ciphertext:
    fixed = struct.calcsize("<4sBB")
    if len(buf) < fixed:
        raise SerializationError("truncated ciphertext header")
    magic, version, name_len = struct.unpack_from("<4sBB", buf)
    if magic != _CT_MAGIC:
        raise SerializationError(f"bad ciphertext magic {magic!r}")
    if version != _CT_VERSION:
        raise SerializationError(f"unsupported ciphertext version {version}")
    off = fixed
    name = buf[off : off + name_len].decode()
    off += name_len
    tail_fmt = "<BBBId"
    if len(buf) < off + struct.calcsize(tail_fmt):
        raise SerializationError("truncated ciphertext header fields")
    level, ncomp, dir_flag, length, scale = struct.unpack_from(tail_fmt, buf, off)
    off += struct.calcsize(tail_fmt)
    if params is None:
        if name not in _PRESET_SPECS:
            raise SerializationError(
                f"ciphertext references preset {name!r}; pass params explicitly"
            )
        params = get_params(name)
    comps = []
    for _ in range(ncomp):
        if len(buf) < off + 4:
            raise SerializationError("truncated component length prefix")
        (blen,) = struct.unpack_from("<I", buf, off)
        off += 4
        if len(buf) < off + blen:
            raise SerializationError(
                f"truncated component: need {blen} bytes, have {len(buf) - off}"
            )
        comps.append(RingElement.from_bytes(buf[off : off + blen], params.ring))
        off += blen
    if off != len(buf):
        raise SerializationError(f"{len(buf) - off} trailing bytes after ciphertext")
    return Ciphertext(
        params=params,
        comps=tuple(comps),
        level=level,
        scale=scale,
        length=length,
        direction="forward" if dir_flag == 0 else "reversed",
    )
