"""Shielded note model and the simulated cryptographic primitives behind it.

Everything that touches a ledger is built from two primitives: a 256-bit
hash (SHA-256) and an authenticated stream cipher derived from it. Both are
stand-ins for the real circuit-friendly constructions; the properties the
rest of the simulator relies on are only collision resistance and ciphertext
authentication.

The canonical byte encodings defined here (fixed-width big-endian integers,
length-prefixed byte strings) are the single source of truth for every
digest input in the package, so commitments and transaction ids are
bit-reproducible across runs.
"""

from __future__ import annotations

import hashlib
import hmac
import secrets
from dataclasses import dataclass
from typing import Optional

DIGEST_SIZE = 32
DIVERSIFIER_SIZE = 11
KEY_SIZE = 32
VALUE_WIDTH = 8  # 64-bit amounts in base units (1 ZEC = 10^8 base units)

ZERO32 = b"\x00" * 32


class NoteError(ValueError):
    pass


def encode_int(value: int, width: int = VALUE_WIDTH) -> bytes:
    if value < 0:
        raise NoteError(f"amounts are non-negative integers, got {value}")
    return value.to_bytes(width, "big")


def encode_bytes(data: bytes) -> bytes:
    """Length-prefixed byte string (4-byte big-endian length)."""
    return len(data).to_bytes(4, "big") + data


def digest(tag: bytes, *parts: bytes) -> bytes:
    """Domain-separated SHA-256 over canonically framed parts."""
    h = hashlib.sha256()
    h.update(encode_bytes(tag))
    for part in parts:
        h.update(encode_bytes(part))
    return h.digest()


@dataclass(frozen=True)
class Address:
    """Shielded payment address stand-in: an opaque (diversifier, pk_d) pair."""

    diversifier: bytes
    pk_d: bytes

    def __post_init__(self):
        if len(self.diversifier) != DIVERSIFIER_SIZE:
            raise NoteError("diversifier must be 11 bytes")
        if len(self.pk_d) != KEY_SIZE:
            raise NoteError("pk_d must be 32 bytes")

    def encode(self) -> bytes:
        return encode_bytes(self.diversifier) + encode_bytes(self.pk_d)


@dataclass(frozen=True)
class Note:
    """A spendable value record: who can spend it, how much, and the
    commitment trapdoor that hides it."""

    address: Address
    value: int
    rcm: bytes

    def __post_init__(self):
        if self.value < 0:
            raise NoteError("note value must be non-negative")
        if len(self.rcm) != KEY_SIZE:
            raise NoteError("rcm must be 32 bytes")

    def encode(self) -> bytes:
        return self.address.encode() + encode_int(self.value) + encode_bytes(self.rcm)


@dataclass(frozen=True)
class NoteCommitment:
    digest: bytes

    def hex(self) -> str:
        return self.digest.hex()


@dataclass(frozen=True)
class Nullifier:
    digest: bytes

    def hex(self) -> str:
        return self.digest.hex()


@dataclass(frozen=True)
class SharedSecret:
    secret: bytes


@dataclass(frozen=True)
class NoteCiphertext:
    """Authenticated ciphertext of a note; any bit flip fails authentication."""

    payload: bytes
    ephemeral_public: bytes


def commit_note(note: Note) -> NoteCommitment:
    """Binding commitment to the full note contents."""
    return NoteCommitment(digest(b"note-commitment", note.encode()))


def derive_rcm(nonce: bytes) -> bytes:
    """Deterministic trapdoor from a lock-permit nonce.

    Using the permit nonce as the sole source of commitment randomness ties
    one on-chain lock note to exactly one permit, which is what makes lock
    replays detectable.
    """
    return digest(b"rcm-from-nonce", nonce)


def derive_nullifier(note: Note, nullifier_key: bytes) -> Nullifier:
    """Nullifier for a note under a spending authority's nullifier key.

    Without the key the mapping from commitment to nullifier is infeasible
    to compute, so revealing the nullifier does not link back to the note.
    """
    return Nullifier(digest(b"nullifier", note.encode(), nullifier_key))


def random_address(rng) -> Address:
    return Address(rng_bytes(rng, DIVERSIFIER_SIZE), rng_bytes(rng, KEY_SIZE))


def rng_bytes(rng, n: int) -> bytes:
    """n deterministic bytes from a seeded random.Random (or os randomness
    when rng is None)."""
    if rng is None:
        return secrets.token_bytes(n)
    return rng.getrandbits(8 * n).to_bytes(n, "big")


class SharedSecretDirectory:
    """Simulated key agreement.

    For a real shielded pool the shared secret of a ciphertext is fully
    determined by the ephemeral public key and the recipient address; the
    sender cannot pick an ephemeral key whose secret the recipient is unable
    to derive. This class reproduces exactly that determinism with a keyed
    hash. The directory's key never appears in any serialized public output,
    so observers cannot evaluate the map; protocol code hands the directory
    only to parties that could run the key agreement for real.
    """

    def __init__(self, sim_key: bytes):
        self._sim_key = sim_key

    def new_ephemeral(self, rng) -> bytes:
        return rng_bytes(rng, KEY_SIZE)

    def secret_for(self, ephemeral_public: bytes, recipient: Address) -> SharedSecret:
        return SharedSecret(
            digest(b"shared-secret", self._sim_key, ephemeral_public, recipient.encode())
        )


def _keystream(secret: SharedSecret, ephemeral_public: bytes, length: int) -> bytes:
    out = bytearray()
    counter = 0
    while len(out) < length:
        out += digest(b"stream", secret.secret, ephemeral_public, encode_int(counter))
        counter += 1
    return bytes(out[:length])


def _auth_tag(secret: SharedSecret, ephemeral_public: bytes, body: bytes) -> bytes:
    return hmac.new(secret.secret, encode_bytes(ephemeral_public) + encode_bytes(body),
                    hashlib.sha256).digest()


def encrypt_note(note: Note, recipient: Address, secret: SharedSecret,
                 ephemeral_public: bytes) -> NoteCiphertext:
    """Symmetric authenticated encryption of a note to a recipient address."""
    plaintext = note.encode()
    body = bytes(a ^ b for a, b in zip(plaintext, _keystream(secret, ephemeral_public,
                                                             len(plaintext))))
    tag = _auth_tag(secret, ephemeral_public, body)
    return NoteCiphertext(payload=body + tag, ephemeral_public=ephemeral_public)


def decrypt_note(ct: NoteCiphertext, secret: SharedSecret) -> Optional[Note]:
    """Returns the note, or None when authentication or decoding fails.

    A None here is exactly the condition under which the recipient should
    challenge the request that published the ciphertext.
    """
    if len(ct.payload) < DIGEST_SIZE:
        return None
    body, tag = ct.payload[:-DIGEST_SIZE], ct.payload[-DIGEST_SIZE:]
    if not hmac.compare_digest(tag, _auth_tag(secret, ct.ephemeral_public, body)):
        return None
    plaintext = bytes(a ^ b for a, b in zip(body, _keystream(secret, ct.ephemeral_public,
                                                             len(body))))
    return _decode_note(plaintext)


class _Cursor:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take_prefixed(self) -> bytes:
        n = int.from_bytes(self.raw[self.pos:self.pos + 4], "big")
        start = self.pos + 4
        if start + n > len(self.raw):
            raise NoteError("truncated field")
        self.pos = start + n
        return self.raw[start:start + n]

    def take_fixed(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise NoteError("truncated field")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def done(self) -> bool:
        return self.pos == len(self.raw)


def _decode_note(raw: bytes) -> Optional[Note]:
    """Inverse of Note.encode; None on any malformation."""
    try:
        cur = _Cursor(raw)
        d = cur.take_prefixed()
        pk = cur.take_prefixed()
        value = int.from_bytes(cur.take_fixed(VALUE_WIDTH), "big")
        rcm = cur.take_prefixed()
        if not cur.done():
            return None
        return Note(Address(d, pk), value, rcm)
    except NoteError:
        return None


CHALLENGE_UPHELD = "challenge-upheld"
CHALLENGE_REJECTED = "challenge-rejected"


def verify_challenge(ct: NoteCiphertext, revealed: SharedSecret,
                     claimed_cm: NoteCommitment, directory: SharedSecretDirectory,
                     recipient: Address) -> str:
    """Public verdict on a ciphertext challenge given the revealed secret.

    The directory lookup plays the role of the correctness proof binding the
    revealed secret to the ciphertext's ephemeral key: a forged secret fails
    the binding and the challenge is rejected no matter what the ciphertext
    contains. With a correctly bound secret, the challenge is upheld exactly
    when the recipient's own decrypt-and-compare would have failed.
    """
    if revealed != directory.secret_for(ct.ephemeral_public, recipient):
        return CHALLENGE_REJECTED
    note = decrypt_note(ct, revealed)
    if note is None or commit_note(note) != claimed_cm:
        return CHALLENGE_UPHELD
    return CHALLENGE_REJECTED
