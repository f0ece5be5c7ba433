"""Multi-user key material: masked key sums and masked partial decryptions.

Every user u holds a per-epoch secret s_u plus one static shared seed per
peer.  From the pair seed both endpoints derive the *same* uniform ring
element and attach it with opposite signs, so for any roster R:

    sum_{u in R} (s_u + sum_{j in R, j != u} sgn(u,j) * m_{u,j})  =  sum_u s_u

The masked keys therefore reveal the aggregate key and nothing else (each
individual masked key is uniform given the rest).  The same trick, keyed by a
per-leg round tag, masks partial decryptions: user u returns

    ps_u = c1_u * s_u + e_flood + sum_j sgn(u,j) * r_{u,j}(tag)

and only the sum over the full roster strips the masks.  The flooding noise
(sigma * 2^flood_sigma_bits) drowns the secret-dependent rounding of the
individual share.

Pair seeds stand in for an out-of-band pairwise agreement (e.g. a DH
exchange); here they are derived from a master seed so simulations are
reproducible.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ProtocolError, SerializationError
from .he import Ciphertext, EvalKey, HeParams, SecretKey, decode, decrypt
from .ring import RingElement, sample_error, sample_uniform

_MK_MAGIC = b"FMK1"
_PD_MAGIC = b"FPD1"


def _h(*parts: bytes) -> bytes:
    return hashlib.sha256(b"|".join(parts)).digest()


def _pair_seed(master: bytes, u: int, j: int) -> bytes:
    lo, hi = sorted((u, j))
    return _h(master, b"pair", str(lo).encode(), str(hi).encode())


def _pair_mask(
    params: HeParams,
    seed: bytes,
    u: int,
    j: int,
    tag: bytes,
    *,
    level: int | None = None,
    special: bool = False,
) -> RingElement:
    """The antisymmetric pairwise mask: same element, sign flipped with order."""
    m = sample_uniform(
        params.ring, seed, level=level, special=special, ntt=True, tag=tag
    )
    return m if u < j else m.neg()


@dataclass
class UserKeyring:
    """One user's secret material for one epoch."""

    user_id: int
    params: HeParams
    epoch: int
    sk: SecretKey
    evk: EvalKey
    secret_seed: bytes
    pair_seeds: dict[int, bytes]


@dataclass
class MaskedKey:
    user_id: int
    epoch: int
    elem: RingElement

    def to_bytes(self) -> bytes:
        blob = self.elem.to_bytes()
        return struct.pack("<4sII", _MK_MAGIC, self.user_id, self.epoch) + blob

    @classmethod
    def from_bytes(cls, buf: bytes, params: HeParams) -> "MaskedKey":
        head = struct.calcsize("<4sII")
        if len(buf) < head:
            raise SerializationError("truncated masked key")
        magic, uid, epoch = struct.unpack_from("<4sII", buf)
        if magic != _MK_MAGIC:
            raise SerializationError(f"bad masked-key magic {magic!r}")
        return cls(uid, epoch, RingElement.from_bytes(buf[head:], params.ring))


@dataclass
class PartialDecryption:
    user_id: int
    epoch: int
    elem: RingElement

    def to_bytes(self) -> bytes:
        blob = self.elem.to_bytes()
        return struct.pack("<4sII", _PD_MAGIC, self.user_id, self.epoch) + blob

    @classmethod
    def from_bytes(cls, buf: bytes, params: HeParams) -> "PartialDecryption":
        head = struct.calcsize("<4sII")
        if len(buf) < head:
            raise SerializationError("truncated partial decryption")
        magic, uid, epoch = struct.unpack_from("<4sII", buf)
        if magic != _PD_MAGIC:
            raise SerializationError(f"bad partial-decryption magic {magic!r}")
        return cls(uid, epoch, RingElement.from_bytes(buf[head:], params.ring))


@dataclass
class PartialDecryptRequest:
    """What the server sends down: which epoch/leg, and the c1 to key-switch."""

    epoch: int
    round_tag: bytes
    c1: RingElement


def setup_pairwise(
    params: HeParams,
    user_ids,
    epoch: int,
    master_seed: bytes,
    *,
    with_evk: bool = True,
) -> dict[int, UserKeyring]:
    """Provision keyrings for a user population at a given epoch.

    Per-epoch secrets are re-derived from each user's long-term seed, so
    rotating the epoch refreshes s_u and the evaluation key while the pairwise
    seeds stay put.  `with_evk=False` skips the (comparatively expensive)
    evaluation keys for callers that only mask or decrypt.
    """
    ids = list(user_ids)
    if len(set(ids)) != len(ids):
        raise ProtocolError("duplicate user ids in setup")
    rings: dict[int, UserKeyring] = {}
    for u in ids:
        secret_seed = _h(master_seed, b"user", str(u).encode())
        sk_seed = _h(secret_seed, b"sk", str(epoch).encode())
        sk = SecretKey.generate(params, sk_seed)
        evk = None
        if with_evk:
            evk_seed = int.from_bytes(
                _h(secret_seed, b"evk", str(epoch).encode())[:8], "little"
            )
            evk = EvalKey.generate(params, sk, np.random.default_rng(evk_seed))
        pair_seeds = {j: _pair_seed(master_seed, u, j) for j in ids if j != u}
        rings[u] = UserKeyring(
            user_id=u,
            params=params,
            epoch=epoch,
            sk=sk,
            evk=evk,
            secret_seed=secret_seed,
            pair_seeds=pair_seeds,
        )
    return rings


def _check_roster(kr: UserKeyring, roster) -> list[int]:
    roster = list(roster)
    if len(set(roster)) != len(roster):
        raise ProtocolError("duplicate user ids in roster")
    if kr.user_id not in roster:
        raise ProtocolError(f"user {kr.user_id} not part of roster {roster}")
    missing = [j for j in roster if j != kr.user_id and j not in kr.pair_seeds]
    if missing:
        raise ProtocolError(f"no pair seeds for roster members {missing}")
    return roster


def mask_key(kr: UserKeyring, roster) -> MaskedKey:
    """The user's epoch key plus all pairwise masks for this roster."""
    roster = _check_roster(kr, roster)
    tag = b"km|" + str(kr.epoch).encode()
    acc = kr.sk.s
    for j in roster:
        if j == kr.user_id:
            continue
        acc = acc.add(
            _pair_mask(kr.params, kr.pair_seeds[j], kr.user_id, j, tag, special=True)
        )
    return MaskedKey(user_id=kr.user_id, epoch=kr.epoch, elem=acc)


def reconstruct_group_key(masked_keys, roster) -> RingElement:
    """Sum the masked keys of exactly this roster; pair masks cancel to sum(s_u)."""
    roster = list(roster)
    by_user = {}
    for mk in masked_keys:
        if mk.user_id in by_user:
            raise ProtocolError(f"duplicate masked key from user {mk.user_id}")
        by_user[mk.user_id] = mk
    if set(by_user) != set(roster):
        raise ProtocolError(
            f"masked keys {sorted(by_user)} do not match roster {sorted(roster)}"
        )
    epochs = {mk.epoch for mk in by_user.values()}
    if len(epochs) != 1:
        raise ProtocolError(f"mixed epochs in masked keys: {sorted(epochs)}")
    acc = None
    for u in roster:
        acc = by_user[u].elem if acc is None else acc.add(by_user[u].elem)
    return acc


def aggregate_fresh(cts: dict[int, Ciphertext]) -> Ciphertext:
    """Sum fresh ciphertexts that share the round's public polynomial.

    Only the c0 parts add; c1 stays the shared a, so the sum decrypts under
    the aggregate key sum(s_u).
    """
    if not cts:
        raise ProtocolError("nothing to aggregate")
    users = sorted(cts)
    first = cts[users[0]]
    acc = first.c0
    for u in users[1:]:
        ct = cts[u]
        if ct.c1 != first.c1:
            raise ProtocolError(
                "fresh aggregation requires the shared public polynomial; "
                f"user {u} encrypted against a different one"
            )
        if (ct.level, ct.length, ct.direction) != (first.level, first.length, first.direction):
            raise ProtocolError("fresh aggregation requires identical ciphertext shapes")
        acc = acc.add(ct.c0)
    return Ciphertext(
        params=first.params,
        comps=(acc, first.c1.copy()),
        level=first.level,
        scale=first.scale,
        length=first.length,
        direction=first.direction,
        noise_log2=first.noise_log2 + np.log2(len(users)),
        msg_bound=first.msg_bound * len(users),
    )


def group_decrypt(ct: Ciphertext, group_key: RingElement):
    """Decrypt an aggregate of fresh ciphertexts with the reconstructed key sum."""
    return decrypt(ct, SecretKey(group_key)).values


def masked_partial_decrypt(
    kr: UserKeyring,
    c1: RingElement,
    round_tag: bytes,
    roster,
    rng: np.random.Generator,
) -> PartialDecryption:
    """c1 * s_u, flooded and masked so only the roster-wide sum is meaningful.

    The round tag must be unique per (epoch, protocol leg); reusing one lets
    two mask layers cancel outside the intended sum.
    """
    roster = _check_roster(kr, roster)
    if not c1.ntt:
        raise ProtocolError("partial decryption expects an NTT-domain c1")
    level = c1.level
    s_l = kr.sk.s.mod_reduce_to(level)
    flood_sigma = kr.params.sigma * 2.0**kr.params.flood_sigma_bits
    flood = sample_error(kr.params.ring, rng, flood_sigma, level=level).to_ntt()
    acc = c1.mul(s_l).add(flood)
    tag = b"pd|" + str(kr.epoch).encode() + b"|" + round_tag
    for j in roster:
        if j == kr.user_id:
            continue
        acc = acc.add(
            _pair_mask(kr.params, kr.pair_seeds[j], kr.user_id, j, tag, level=level)
        )
    return PartialDecryption(user_id=kr.user_id, epoch=kr.epoch, elem=acc)


def combine_partials(
    cts: dict[int, Ciphertext],
    partials: dict[int, PartialDecryption],
) -> np.ndarray:
    """sum_u c0_u minus the summed partial decryptions, decoded.

    Each user supplied the key switch for their own c1, so this recovers
    sum_u (m_u + noise) without any party revealing s_u.
    """
    if not cts:
        raise ProtocolError("nothing to combine")
    if set(cts) != set(partials):
        raise ProtocolError(
            f"partials {sorted(partials)} do not match ciphertexts {sorted(cts)}"
        )
    epochs = {p.epoch for p in partials.values()}
    if len(epochs) != 1:
        raise ProtocolError(f"mixed epochs in partial decryptions: {sorted(epochs)}")
    users = sorted(cts)
    first = cts[users[0]]
    phase = None
    for u in users:
        ct = cts[u]
        if len(ct.comps) != 2:
            raise ProtocolError("relinearize before requesting partial decryptions")
        if (ct.level, ct.length, ct.direction) != (first.level, first.length, first.direction):
            raise ProtocolError("aggregated ciphertexts must share shape and level")
        if not np.isclose(ct.scale, first.scale, rtol=1e-9):
            raise ProtocolError("aggregated ciphertexts must share the scale")
        part = partials[u].elem
        if part.level != ct.level:
            raise ProtocolError(
                f"partial from user {u} is at level {part.level}, ciphertext at {ct.level}"
            )
        contrib = ct.c0.sub(part)
        phase = contrib if phase is None else phase.add(contrib)
    return decode(phase.to_coeff(), first.scale, first.length, first.direction)
