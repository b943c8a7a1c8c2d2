"""Publicly verifiable provable data possession over RSA full-domain-hash tags.

Tag of block ``b`` of chunk ``i``:  tau = (fdh(file_id || i || b) * g^f)^d mod N.
A proof aggregates, per block position, T = prod tau^a and M = sum a*f, and is
checked with  T^e == prod fdh(...)^a * g^M (mod N)  using public values only.
M travels in the clear, so a verifier learns that linear combination of the
challenged blocks.
"""
import math
from collections import Counter
from functools import lru_cache
from typing import List, Mapping, Optional, Sequence, Tuple

from audita.config import settings
from audita.core.crypto import (
    DIGEST_BITS,
    HashDomain,
    HashDrbg,
    hash,
    sample_without_replacement,
    sha3_digest,
)
from audita.core.exceptions import (
    BaseAuditaException,
    IncompleteInputException,
    InternalException,
    ParameterException,
)
from audita.core.logging import get_logger
from audita.models.pdp import (
    AggregatedBlock,
    Challenge,
    ChunkTag,
    PdpKeyPair,
    PdpProof,
    PdpPublicKey,
)
from audita.utils.chunking import split_blocks
from audita.utils.encoding import Encoder

logger = get_logger(__name__)

OPERATION_COUNTS: Counter = Counter()


def _small_primes(limit: int) -> List[int]:
    sieve = bytearray([1]) * limit
    sieve[0:2] = b"\x00\x00"
    for value in range(2, int(limit ** 0.5) + 1):
        if sieve[value]:
            sieve[value * value::value] = bytearray(len(sieve[value * value::value]))
    return [value for value in range(3, limit) if sieve[value]]


SMALL_PRIMES = _small_primes(2048)


def chunk_bits(modulus_bits: int, max_challenge: Optional[int] = None) -> int:
    """Bits of data a single PDP block may carry under the modulus headroom"""
    d_max = max_challenge or settings.PDP_MAX_CHALLENGE
    return (
        modulus_bits
        - settings.PDP_COEFFICIENT_BITS
        - math.ceil(math.log2(max(d_max, 2)))
        - settings.PDP_SLACK_BITS
    )


def derive_file_id(rng_seed: bytes) -> bytes:
    return hash(HashDomain.FILE_ID, rng_seed)


def _is_probable_prime(candidate: int, drbg: HashDrbg, rounds: int) -> bool:
    if candidate < 4:
        return candidate in (2, 3)
    if candidate % 2 == 0:
        return False
    r, s = 0, candidate - 1
    while s % 2 == 0:
        r += 1
        s //= 2
    for _ in range(rounds):
        a = drbg.randbelow(candidate - 3) + 2
        x = pow(a, s, candidate)
        if x == 1 or x == candidate - 1:
            continue
        for _ in range(r - 1):
            x = pow(x, 2, candidate)
            if x == candidate - 1:
                break
        else:
            return False
    return True


def _safe_prime(bits: int, drbg: HashDrbg) -> int:
    """Find p = 2q + 1 with p, q prime and the two top bits of p set"""
    rounds = settings.PDP_MILLER_RABIN_ROUNDS
    q_bits = bits - 1
    attempts = 0
    while attempts < settings.PDP_PRIME_ATTEMPTS:
        q = drbg.randbits(q_bits) | (3 << (q_bits - 2)) | 1
        for _ in range(4096):
            attempts += 1
            q += 2
            if q.bit_length() != q_bits:
                break
            # q and 2q+1 must both avoid small factors: q % s not in {0, (s-1)/2}
            if any(q % s in (0, (s - 1) >> 1) for s in SMALL_PRIMES):
                continue
            p = 2 * q + 1
            if pow(2, q - 1, q) != 1 or pow(2, p - 1, p) != 1:
                continue
            if _is_probable_prime(q, drbg, rounds) and _is_probable_prime(p, drbg, rounds):
                return p
    raise InternalException(f"no {bits}-bit safe prime after {attempts} candidates")


def pdp_keygen(
    security_parameter: int,
    rng_seed: bytes,
    chunk_size: Optional[int] = None,
    max_challenge: Optional[int] = None,
) -> PdpKeyPair:
    if security_parameter not in settings.PDP_ALLOWED_MODULUS_BITS:
        raise ParameterException(
            f"modulus bits {security_parameter} not in {settings.PDP_ALLOWED_MODULUS_BITS}"
        )

    drbg = HashDrbg(rng_seed)
    half = security_parameter // 2
    p = _safe_prime(half, drbg)
    q = _safe_prime(security_parameter - half, drbg)
    while q == p:
        q = _safe_prime(security_parameter - half, drbg)

    modulus = p * q
    if modulus.bit_length() != security_parameter:
        raise InternalException(f"modulus has {modulus.bit_length()} bits")

    order = 2 * ((p - 1) // 2) * ((q - 1) // 2)  # lambda(N)
    public_exponent = settings.PDP_PUBLIC_EXPONENT
    if math.gcd(public_exponent, order) != 1:
        raise InternalException("public exponent is not invertible")
    private_exponent = pow(public_exponent, -1, order)

    while True:
        a = drbg.randbelow(modulus - 3) + 2
        generator = a * a % modulus
        if all(math.gcd(value, modulus) == 1 for value in (a, generator - 1, a - 1, a + 1)):
            break

    block_size = chunk_bits(security_parameter, max_challenge) // 8
    if block_size <= 0:
        raise ParameterException(f"modulus of {security_parameter} bits leaves no room for data")
    blocks = 1 if chunk_size is None else max(1, math.ceil(chunk_size / block_size))

    public = PdpPublicKey(
        modulus=modulus,
        public_exponent=public_exponent,
        generator=generator,
        file_id=derive_file_id(rng_seed),
        block_bytes=block_size,
        blocks_per_chunk=blocks,
        slack_bits=settings.PDP_SLACK_BITS,
    )
    logger.info("pdp_keygen", modulus_bits=security_parameter, blocks_per_chunk=blocks,
                file_id=public.file_id.hex())
    return PdpKeyPair(public=public, private_exponent=private_exponent, prime_p=p, prime_q=q)


@lru_cache(maxsize=1 << 16)
def _fdh(modulus: int, file_id: bytes, index: int, position: int) -> int:
    # expand to modulus width + 128 bits, reduce, square into QR_N
    width = (modulus.bit_length() + 7) // 8 + 16
    prefix = file_id + index.to_bytes(8, "big") + position.to_bytes(4, "big")
    stream = b"".join(
        hash(HashDomain.FULL_DOMAIN_HASH, prefix + counter.to_bytes(4, "big"))
        for counter in range(math.ceil(width / 32))
    )
    value = int.from_bytes(stream[:width], "big") % modulus
    return value * value % modulus


def fdh(public: PdpPublicKey, index: int, position: int = 0) -> int:
    return _fdh(public.modulus, public.file_id, index, position)


def _crt_power(keys: PdpKeyPair, base: int) -> int:
    p, q, d = keys.prime_p, keys.prime_q, keys.private_exponent
    m1 = pow(base % p, d % (p - 1), p)
    m2 = pow(base % q, d % (q - 1), q)
    h = pow(q, -1, p) * (m1 - m2) % p
    return m2 + h * q


def tag_block(keys: PdpKeyPair, index: int, position: int, value: int) -> int:
    public = keys.public
    if value < 0 or value >= 1 << (8 * public.block_bytes):
        raise ParameterException(
            f"block value of {value.bit_length()} bits exceeds {8 * public.block_bytes}-bit headroom"
        )
    base = fdh(public, index, position) * pow(public.generator, value, public.modulus) % public.modulus
    return _crt_power(keys, base)


def pdp_tag(keys: PdpKeyPair, index: int, chunk: bytes) -> ChunkTag:
    public = keys.public
    if len(chunk) > public.chunk_capacity:
        raise ParameterException(
            f"chunk of {len(chunk)} bytes exceeds the {public.chunk_capacity}-byte capacity of the key"
        )
    values = split_blocks(chunk, public.block_bytes, public.blocks_per_chunk)
    OPERATION_COUNTS["tag"] += 1
    return ChunkTag(
        index=index,
        values=tuple(tag_block(keys, index, position, value) for position, value in enumerate(values)),
    )


def index_space_digest(index_space: Sequence[int]) -> bytes:
    encoder = Encoder().uint(len(index_space))
    for index in index_space:
        encoder.uint(index)
    return sha3_digest(encoder.getvalue())


def challenge_indexes(d: int, index_space: Sequence[int], seed: bytes) -> Tuple[int, ...]:
    if d < 0 or d > len(index_space):
        raise ParameterException(f"cannot challenge {d} of {len(index_space)} indexes")
    if d == 0:
        return ()
    positions = sample_without_replacement(HashDomain.CHALLENGE_INDEX, seed, len(index_space), d)
    return tuple(index_space[position] for position in positions)


def challenge_coefficients(d: int, seed: bytes) -> Tuple[int, ...]:
    bits = settings.PDP_COEFFICIENT_BITS
    span = (1 << bits) - 1
    return tuple(
        (int.from_bytes(hash(HashDomain.COEFFICIENT, seed + j.to_bytes(8, "big")), "big")
         >> (DIGEST_BITS - bits)) % span + 1
        for j in range(d)
    )


def pdp_genchal(d: int, index_space: Sequence[int], seed: bytes) -> Challenge:
    return Challenge(
        d=d,
        indexes=challenge_indexes(d, index_space, seed),
        coefficients=challenge_coefficients(d, seed),
        seed=seed,
        index_space_digest=index_space_digest(index_space),
    )


def pdp_genproof(
    public: PdpPublicKey,
    chal: Challenge,
    chunks: Mapping[int, bytes],
    tags: Mapping[int, ChunkTag],
) -> PdpProof:
    modulus = public.modulus
    blocks = public.blocks_per_chunk
    aggregated_tags = [1] * blocks
    aggregated_data = [0] * blocks

    for index, coefficient in zip(chal.indexes, chal.coefficients):
        if index not in chunks or index not in tags:
            raise IncompleteInputException(f"missing chunk or tag for challenged index {index}")
        tag = tags[index]
        if len(tag.values) != blocks:
            raise ParameterException(f"tag of chunk {index} has {len(tag.values)} blocks, expected {blocks}")
        values = split_blocks(chunks[index], public.block_bytes, blocks)
        for position in range(blocks):
            aggregated_tags[position] = aggregated_tags[position] * pow(tag.values[position], coefficient, modulus) % modulus
            aggregated_data[position] += coefficient * values[position]

    OPERATION_COUNTS["genproof"] += 1
    return PdpProof(
        blocks=tuple(AggregatedBlock(tag=t, data=m) for t, m in zip(aggregated_tags, aggregated_data))
    )


def pdp_checkproof(public: PdpPublicKey, chal: Challenge, proof: PdpProof) -> bool:
    OPERATION_COUNTS["checkproof"] += 1
    try:
        return _check(public, chal, proof)
    except (BaseAuditaException, ValueError, TypeError, AttributeError) as e:
        logger.debug("checkproof_malformed", error=str(e))
        return False


def _check(public: PdpPublicKey, chal: Challenge, proof: PdpProof) -> bool:
    modulus = public.modulus
    if len(proof.blocks) != public.blocks_per_chunk:
        return False
    if len(chal.indexes) != chal.d or len(chal.coefficients) != chal.d:
        return False

    bound = public.aggregate_bound
    for position, block in enumerate(proof.blocks):
        if not 0 < block.tag < modulus or not 0 <= block.data < bound:
            return False
        expected = pow(public.generator, block.data, modulus)
        for index, coefficient in zip(chal.indexes, chal.coefficients):
            expected = expected * pow(fdh(public, index, position), coefficient, modulus) % modulus
        if pow(block.tag, public.public_exponent, modulus) != expected:
            return False
    return True


def proof_size(public: PdpPublicKey, proof: PdpProof) -> int:
    return len(proof.to_bytes(public.modulus_bytes))


def detection_probability_bounds(m: int, t: int, d: int) -> Tuple[float, float]:
    """Probability that a node holding m - t of its m chunks fails a d-chunk challenge"""
    if not 0 <= t <= m:
        raise ParameterException(f"deleted chunks t={t} must lie in [0, {m}]")
    if not 1 <= d <= m - t:
        raise ParameterException(f"challenge size d={d} must lie in [1, {m - t}]")

    lower = 1.0 - ((m - t) / m) ** d
    remaining = m - d + 1
    upper = 1.0 - ((remaining - t) / remaining) ** d if remaining > t else 1.0
    return lower, upper
