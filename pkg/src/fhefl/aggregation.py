"""Norm-weighted robust aggregation, in the clear and under encryption.

The defense weights every user's gradient by a non-poisoning rate

    p_u = (1 - d_u / sum_j d_j) / (U - 1),        d_u = ||grad_u||^2

which sums to exactly 1 over the roster and shrinks as a user's update norm
grows — label-flipping attackers inflate their gradient norms and get
down-weighted without the server ever ranking identities.

The encrypted path mirrors the plain one stage for stage:

1. norm:        [d_u] = forward(g_u) * reversed(g_u); the squared norm sits on
                coefficient chunk_len-1 of the product.
2. d-sum:       sum_u [d_u] is opened with masked partial decryptions (the
                server learns only the total).
3. rate:        [p_u] = plain_affine([d_u], -1/((U-1)*sum_d), 1/(U-1)).
4. re-encrypt:  the rate ciphertext is a dense product polynomial, so it
                cannot be multiplied cleanly against a packed gradient.  The
                server blinds the readout coefficient with a random rho_u,
                user u decrypts the blinded scalar and returns a fresh
                encryption of it, and the server subtracts rho_u again.  The
                user only ever sees p_u + rho_u; the server never sees p_u.
5. check:       sum_u [p~_u] is opened under the masked group key and must be
                ~1, so a user cannot inflate their weight while re-encrypting.
6. aggregate:   sum_u [p~_u] * [g_u] is opened with partial decryptions;
                the model moves by -eta times the weighted gradient sum.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .errors import FheflError, ParameterError, ProtocolError
from .he import (
    Ciphertext,
    EvalKey,
    common_poly,
    decrypt,
    encode,
    encrypt,
    he_add,
    he_mult_relin,
    plain_affine,
)
from .multikey import (
    UserKeyring,
    aggregate_fresh,
    combine_partials,
    group_decrypt,
    mask_key,
    masked_partial_decrypt,
    reconstruct_group_key,
)

# ---------------------------------------------------------------------------
# plain-domain pieces
# ---------------------------------------------------------------------------


@dataclass
class GradientUpdate:
    """One user's local update for a round: the effective gradient and its step."""

    user_id: int
    grad: np.ndarray
    eta: float

    def __post_init__(self) -> None:
        self.grad = np.asarray(self.grad, dtype=np.float64)
        if self.grad.ndim != 1 or not np.isfinite(self.grad).all():
            raise ParameterError("gradient updates must be finite 1-d vectors")


def _as_matrix(updates) -> np.ndarray:
    if isinstance(updates, np.ndarray):
        mat = np.atleast_2d(np.asarray(updates, dtype=np.float64))
    else:
        mat = np.stack([np.asarray(getattr(u, "grad", u), dtype=np.float64) for u in updates])
    if not np.isfinite(mat).all():
        raise ParameterError("non-finite entries in update matrix")
    return mat


def sq_norm_plain(g) -> float:
    g = np.asarray(getattr(g, "grad", g), dtype=np.float64)
    return float(g @ g)


def non_poisoning_rates(dists) -> np.ndarray:
    """Weights (1 - d_u/sum d)/(U-1); sum exactly 1, decreasing in d_u.

    Tiny negative distances (decryption noise) are clamped to zero.  An
    all-equal distance vector short-circuits to exactly 1/U — the formula's
    value there — so the degenerate and no-attack cases are bit-stable.
    """
    d = np.asarray(dists, dtype=np.float64)
    if d.ndim != 1 or d.size < 2:
        raise ParameterError("rates need at least two users")
    if not np.isfinite(d).all():
        raise ParameterError("non-finite distances")
    floor = -1e-6 * max(float(np.abs(d).max()), 1.0)
    if d.min() < floor:
        raise ParameterError(f"distances must be non-negative, got min {d.min():.3g}")
    d = np.maximum(d, 0.0)
    u = d.size
    if np.ptp(d) == 0.0:  # includes the all-zero degenerate round
        return np.full(u, 1.0 / u)
    total = float(d.sum())
    p = (1.0 - d / total) / (u - 1)
    p = np.maximum(p, 0.0)
    return p / p.sum()


def weighted_aggregate_plain(w_prev, updates, rates, eta: float) -> np.ndarray:
    """w_prev - eta * sum_u p_u * grad_u (the plain reference for the pipeline)."""
    mat = _as_matrix(updates)
    rates = np.asarray(rates, dtype=np.float64)
    w_prev = np.asarray(w_prev, dtype=np.float64)
    if rates.shape != (mat.shape[0],):
        raise ParameterError(f"{rates.size} rates for {mat.shape[0]} updates")
    if w_prev.shape != (mat.shape[1],):
        raise ParameterError("model/update dimension mismatch")
    return w_prev - eta * (rates @ mat)


# -- baseline aggregators (plain domain only; all take an update matrix) -------


def fedavg(updates) -> np.ndarray:
    mat = _as_matrix(updates)
    # uniform-rate weighting, so fhefl with equal distances is bit-identical
    return np.full(mat.shape[0], 1.0 / mat.shape[0]) @ mat


def coordinate_median(updates) -> np.ndarray:
    return np.median(_as_matrix(updates), axis=0)


def trimmed_mean(updates, beta: float = 0.1) -> np.ndarray:
    mat = _as_matrix(updates)
    u = mat.shape[0]
    if not 0.0 <= beta < 0.5:
        raise ParameterError(f"trim fraction must be in [0, 0.5), got {beta}")
    k = math.ceil(beta * u)
    if 2 * k >= u:
        raise ParameterError(f"trimming {k} per side leaves nothing of {u} updates")
    if k == 0:
        return fedavg(mat)
    return np.sort(mat, axis=0)[k : u - k].mean(axis=0)


def krum(updates, f: int = 1) -> np.ndarray:
    """Single-Krum: return the update closest (in summed squared distance)
    to its U-f-2 nearest peers."""
    mat = _as_matrix(updates)
    u = mat.shape[0]
    if f < 0:
        raise ParameterError("byzantine count must be non-negative")
    keep = u - f - 2
    if keep < 1:
        raise ParameterError(f"krum needs U - f - 2 >= 1, got U={u}, f={f}")
    d2 = np.sum((mat[:, None, :] - mat[None, :, :]) ** 2, axis=2)
    np.fill_diagonal(d2, np.inf)
    scores = np.sort(d2, axis=1)[:, :keep].sum(axis=1)
    return mat[int(np.argmin(scores))].copy()


AGGREGATORS = {
    "fedavg": fedavg,
    "median": coordinate_median,
    "trimmed_mean": trimmed_mean,
    "krum": krum,
}


def make_aggregator(name: str, *, beta: float = 0.1, f: int = 1):
    """Resolve a baseline aggregator name to a grads->vector callable."""
    if name == "trimmed_mean":
        return lambda m: trimmed_mean(m, beta=beta)
    if name == "krum":
        return lambda m: krum(m, f=f)
    if name in AGGREGATORS:
        return AGGREGATORS[name]
    known = ", ".join(["fhefl", *AGGREGATORS])
    raise ParameterError(f"unknown aggregator {name!r}; known: {known}")


# ---------------------------------------------------------------------------
# encrypted updates
# ---------------------------------------------------------------------------


@dataclass
class EncryptedUpdate:
    """Dual-packed encryption of one gradient: forward and reversed chunks.

    Both packings decrypt (under the owner's key) to the same vector; their
    product realizes the squared norm on coefficient chunk_len-1.  Gradients
    longer than the packing capacity are split into equal zero-padded chunks
    so every chunk shares that readout index.
    """

    user_id: int
    epoch: int
    fwd: tuple[Ciphertext, ...]
    rev: tuple[Ciphertext, ...]
    dim: int
    chunk_len: int

    @property
    def readout(self) -> int:
        """Coefficient index carrying per-chunk norm contributions."""
        return self.chunk_len - 1

    @property
    def n_chunks(self) -> int:
        return len(self.fwd)


def split_chunks(vec: np.ndarray, capacity: int) -> list[np.ndarray]:
    """Chunk a vector; multi-chunk splits are zero-padded to the capacity."""
    vec = np.asarray(vec, dtype=np.float64)
    if vec.size <= capacity:
        return [vec]
    chunks = []
    for start in range(0, vec.size, capacity):
        c = vec[start : start + capacity]
        if c.size < capacity:
            c = np.pad(c, (0, capacity - c.size))
        chunks.append(c)
    return chunks


def encrypt_update(
    kr: UserKeyring,
    grad: np.ndarray,
    a,
    rng: np.random.Generator,
) -> EncryptedUpdate:
    grad = np.asarray(grad, dtype=np.float64)
    if grad.ndim != 1 or grad.size == 0 or not np.isfinite(grad).all():
        raise ParameterError("gradients must be finite non-empty 1-d vectors")
    params = kr.params
    chunks = split_chunks(grad, params.capacity)
    fwd = tuple(encrypt(params, c, kr.sk, a, rng) for c in chunks)
    rev = tuple(encrypt(params, c, kr.sk, a, rng, direction="reversed") for c in chunks)
    return EncryptedUpdate(
        user_id=kr.user_id,
        epoch=kr.epoch,
        fwd=fwd,
        rev=rev,
        dim=grad.size,
        chunk_len=chunks[0].size,
    )


def sq_norm_encrypted(eu: EncryptedUpdate, evk: EvalKey) -> Ciphertext:
    """[g]_fwd * [g]_rev summed over chunks; ||g||^2 lands on eu.readout."""
    acc = None
    for f, r in zip(eu.fwd, eu.rev):
        prod = he_mult_relin(f, r, evk)
        acc = prod if acc is None else he_add(acc, prod)
    return acc


def rates_encrypted(
    d_ct: Ciphertext,
    sum_d: float,
    n_users: int,
    *,
    readout: int = 0,
) -> Ciphertext:
    """[p_u] = (1 - [d_u]/sum_d)/(U-1) as one plaintext affine map.

    The additive 1/(U-1) lands on the readout coefficient carrying d_u.
    """
    if n_users < 2:
        raise ParameterError("rates need at least two users")
    if not sum_d > 0:
        raise ParameterError(f"distance total must be positive, got {sum_d}")
    k1 = -1.0 / ((n_users - 1) * sum_d)
    k0 = 1.0 / (n_users - 1)
    return plain_affine(d_ct, k1, k0, add_index=readout)


# ---------------------------------------------------------------------------
# the full encrypted round
# ---------------------------------------------------------------------------


def _blind_bound(ct: Ciphertext) -> float:
    """Largest safe blinding magnitude for this ciphertext's level headroom."""
    ring = ct.params.ring
    big_q, _ = ring.crt_constants(ring.moduli(ct.level))
    headroom = float(big_q // 2) / (ct.scale * 16.0)
    return min(2.0**20, headroom)


@contextmanager
def _stage(name: str):
    """Annotate any scheme/protocol error with the pipeline stage it hit."""
    try:
        yield
    except ProtocolError as exc:
        if str(exc).startswith("["):
            raise
        raise ProtocolError(f"[{name}] {exc}") from exc
    except FheflError as exc:
        raise ProtocolError(f"[{name}] {exc}") from exc


def secure_aggregate_round(
    enc_updates: dict[int, EncryptedUpdate],
    keyrings: dict[int, UserKeyring],
    w_prev: np.ndarray,
    eta: float,
    rng: np.random.Generator,
    *,
    round_tag: bytes = b"round0",
    rate_sum_tol: float = 0.05,
) -> np.ndarray:
    """One full norm-weighted aggregation under encryption.

    Returns the next model vector; every opened value is roster-aggregate
    (sum of distances, sum of rates, weighted gradient sum) — no per-user
    quantity is ever decrypted server-side.
    """
    users = sorted(enc_updates)
    if len(users) < 2:
        raise ProtocolError("encrypted aggregation needs at least two users")
    if set(users) - set(keyrings):
        raise ProtocolError(f"missing keyrings for users {sorted(set(users) - set(keyrings))}")
    params = keyrings[users[0]].params
    epoch = keyrings[users[0]].epoch
    for u in users:
        eu, kr = enc_updates[u], keyrings[u]
        if eu.user_id != u or kr.user_id != u:
            raise ProtocolError(f"update/keyring ownership mismatch for user {u}")
        if eu.epoch != epoch or kr.epoch != epoch:
            raise ProtocolError(f"mixed epochs in round (user {u})")
    dims = {enc_updates[u].dim for u in users}
    if len(dims) != 1:
        raise ProtocolError(f"mixed gradient dimensions {sorted(dims)}")
    dim = dims.pop()
    w_prev = np.asarray(w_prev, dtype=np.float64)
    if w_prev.shape != (dim,):
        raise ProtocolError(f"model dim {w_prev.shape} vs update dim {dim}")
    roster = users
    n_users = len(users)
    ri = enc_updates[users[0]].readout

    with _stage("norm"):
        d_cts = {u: sq_norm_encrypted(enc_updates[u], keyrings[u].evk) for u in users}

    with _stage("distance-sum"):
        partials = {
            u: masked_partial_decrypt(
                keyrings[u], d_cts[u].c1, round_tag + b"|dsum", roster, rng
            )
            for u in users
        }
        decoded = combine_partials(d_cts, partials)
        sum_d = max(float(decoded[ri]), 0.0)

    with _stage("rate"):
        if sum_d > 0:
            p_cts = {
                u: rates_encrypted(d_cts[u], sum_d, n_users, readout=ri) for u in users
            }
        else:  # all-zero degenerate round: constant 1/U, no division
            p_cts = {
                u: plain_affine(d_cts[u], 0.0, 1.0 / n_users, add_index=ri)
                for u in users
            }

    with _stage("re-encrypt"):
        a2 = common_poly(params, seed=round_tag + b"|a2")
        bound = _blind_bound(p_cts[users[0]])
        if bound < 4.0:
            raise ProtocolError(
                f"blinding headroom {bound:.2g} too small at level {p_cts[users[0]].level}"
            )
        blinds = {u: float(rng.uniform(-bound, bound)) for u in users}
        p_fresh = {}
        for u in users:
            pct = p_cts[u]
            vec = np.zeros(ri + 1)
            vec[ri] = blinds[u]  # the blind must sit on the readout coefficient
            mask = encode(params, vec, pct.level, scale=pct.scale).to_ntt()
            # server -> user: additively blinded rate (still under s_u only)
            blinded = pct.copy()
            blinded.comps = (blinded.comps[0].add(mask), blinded.comps[1])
            # user: decrypt the readout coefficient, re-encrypt it fresh
            opened = float(decrypt(blinded, keyrings[u].sk).values[ri])
            fresh = encrypt(params, [opened], keyrings[u].sk, a2, rng)
            # server: strip the blind homomorphically
            unmask = encode(params, [blinds[u]], fresh.level).to_ntt()
            fresh.comps = (fresh.comps[0].sub(unmask), fresh.comps[1])
            fresh.msg_bound = 1.0
            p_fresh[u] = fresh

    with _stage("rate-sum-check"):
        gk = reconstruct_group_key([mask_key(keyrings[u], roster) for u in roster], roster)
        p_total = float(group_decrypt(aggregate_fresh(p_fresh), gk)[0])
        if abs(p_total - 1.0) > rate_sum_tol:
            raise ProtocolError(
                f"re-encrypted rates sum to {p_total:.4f}, expected 1 "
                f"(tolerance {rate_sum_tol}); aborting round"
            )

    with _stage("aggregate"):
        n_chunks = enc_updates[users[0]].n_chunks
        chunk_len = enc_updates[users[0]].chunk_len
        out = np.empty(n_chunks * chunk_len)
        for c in range(n_chunks):
            prod = {
                u: he_mult_relin(p_fresh[u], enc_updates[u].fwd[c], keyrings[u].evk)
                for u in users
            }
            tag = round_tag + b"|agg|" + str(c).encode()
            partials = {
                u: masked_partial_decrypt(keyrings[u], prod[u].c1, tag, roster, rng)
                for u in users
            }
            out[c * chunk_len : (c + 1) * chunk_len] = combine_partials(prod, partials)
        agg = out[:dim]

    return w_prev - eta * agg
