"""Hashing, hash-driven sampling and the storage-node signature scheme.

Every hash call is SHA3-256 over ``tag || input`` where ``tag`` is the one-byte
:class:`HashDomain` value, so inputs of different domains never collide.
"""
import hashlib
from dataclasses import dataclass
from enum import IntEnum
from typing import List

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from audita.core.exceptions import DecodeException, ParameterException
from audita.utils.encoding import Decoder, Encoder, from_hex

DIGEST_SIZE = 32
DIGEST_BITS = DIGEST_SIZE * 8
COUNTER_WIDTH = 8
PUBLIC_KEY_SIZE = 32
SECRET_KEY_SIZE = 32
SIGNATURE_SIZE = 64


class HashDomain(IntEnum):
    H1_CHUNK_SAMPLING = 1
    H2_NODE_SAMPLING = 2
    H3_CHALLENGE_SEED = 3
    CHALLENGE_INDEX = 4
    COEFFICIENT = 5
    FULL_DOMAIN_HASH = 6
    FILE_ID = 7
    KEY_DERIVATION = 8
    DRBG = 9
    LEADER = 10
    ORACLE = 11
    TRANSACTION = 12
    BLOCK = 13
    LATENCY = 14
    DELETION = 15


def sha3_digest(data: bytes) -> bytes:
    return hashlib.sha3_256(data).digest()


def hash(domain: HashDomain, data: bytes) -> bytes:  # noqa: A001
    return hashlib.sha3_256(bytes([domain]) + data).digest()


def sample_without_replacement(
    domain: HashDomain, seed: bytes, universe_size: int, sample_size: int
) -> List[int]:
    """Draw ``sample_size`` distinct indexes in ``[0, universe_size)``.

    Counter j = 1, 2, ... is hashed with the seed; each digest is read as a
    big-endian integer truncated to the smallest power of two covering the
    universe. Out-of-range values and duplicates are skipped, so the first
    accepted indexes never depend on how many are requested.
    """
    if universe_size < 1:
        raise ParameterException(f"universe_size must be >= 1, got {universe_size}")
    if sample_size < 0 or sample_size > universe_size:
        raise ParameterException(
            f"cannot sample {sample_size} indexes from a universe of {universe_size}"
        )

    shift = DIGEST_BITS - (universe_size - 1).bit_length()
    base = hashlib.sha3_256(bytes([domain]) + seed)
    selected: List[int] = []
    seen = set()
    counter = 0
    while len(selected) < sample_size:
        counter += 1
        h = base.copy()
        h.update(counter.to_bytes(COUNTER_WIDTH, "big"))
        value = int.from_bytes(h.digest(), "big") >> shift
        if value >= universe_size or value in seen:
            continue
        seen.add(value)
        selected.append(value)
    return selected


def hash_to_index(domain: HashDomain, seed: bytes, universe_size: int) -> int:
    return sample_without_replacement(domain, seed, universe_size, 1)[0]


class HashDrbg:
    """Deterministic bit generator: SHA3-256 in counter mode over a seed."""

    def __init__(self, seed: bytes) -> None:
        self._key = hash(HashDomain.DRBG, seed)
        self._counter = 0
        self._buffer = b""

    def randbytes(self, size: int) -> bytes:
        while len(self._buffer) < size:
            self._counter += 1
            self._buffer += sha3_digest(self._key + self._counter.to_bytes(COUNTER_WIDTH, "big"))
        out, self._buffer = self._buffer[:size], self._buffer[size:]
        return out

    def randbits(self, bits: int) -> int:
        if bits <= 0:
            return 0
        value = int.from_bytes(self.randbytes((bits + 7) // 8), "big")
        return value >> (-bits % 8)

    def randbelow(self, upper: int) -> int:
        if upper <= 0:
            raise ParameterException("upper bound must be positive")
        bits = upper.bit_length()
        while True:
            value = self.randbits(bits)
            if value < upper:
                return value


@dataclass(frozen=True)
class SigKeyPair:
    public_key: bytes
    secret_key: bytes

    def to_bytes(self) -> bytes:
        return Encoder().field(self.public_key).field(self.secret_key).getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "SigKeyPair":
        decoder = Decoder(data)
        public_key, secret_key = decoder.field(), decoder.field()
        decoder.finish()
        _check_length(public_key, PUBLIC_KEY_SIZE, "public key")
        _check_length(secret_key, SECRET_KEY_SIZE, "secret key")
        return cls(public_key=public_key, secret_key=secret_key)

    def to_hex(self) -> str:
        return self.to_bytes().hex()

    @classmethod
    def from_hex(cls, text: str) -> "SigKeyPair":
        return cls.from_bytes(from_hex(text))


def _check_length(value: bytes, expected: int, what: str) -> None:
    if len(value) != expected:
        raise DecodeException(f"{what} must be {expected} bytes, got {len(value)}")


def sig_keygen(rng_seed: bytes) -> SigKeyPair:
    secret = hash(HashDomain.KEY_DERIVATION, rng_seed)
    private_key = Ed25519PrivateKey.from_private_bytes(secret)
    public_key = private_key.public_key().public_bytes(
        encoding=serialization.Encoding.Raw, format=serialization.PublicFormat.Raw
    )
    return SigKeyPair(public_key=public_key, secret_key=secret)


def sign(secret_key: bytes, message: bytes) -> bytes:
    _check_length(secret_key, SECRET_KEY_SIZE, "secret key")
    return Ed25519PrivateKey.from_private_bytes(secret_key).sign(message)


def sig_verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    _check_length(public_key, PUBLIC_KEY_SIZE, "public key")
    _check_length(signature, SIGNATURE_SIZE, "signature")
    try:
        key = Ed25519PublicKey.from_public_bytes(public_key)
    except ValueError as e:
        raise DecodeException(f"invalid public key: {e}") from e
    try:
        key.verify(signature, message)
        return True
    except InvalidSignature:
        return False
