"""Storage-audit protocol: key generation, setup, assignment, election, proving and verification.

All sets a verifier needs (a node's chunk indexes, the elected storage-nodes,
every challenge) are recomputed from public data, never taken from the prover.
"""
from collections import defaultdict
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

from audita.config import settings
from audita.core.crypto import (
    HashDomain,
    SigKeyPair,
    hash,
    hash_to_index,
    sample_without_replacement,
    sig_keygen,
    sig_verify,
    sign,
)
from audita.core.exceptions import (
    BaseAuditaException,
    DataLossException,
    InternalException,
    ParameterException,
)
from audita.core.logging import get_logger
from audita.models.ledger import Block
from audita.models.pdp import Challenge
from audita.models.protocol import (
    ChainView,
    ChunkAssignment,
    EncodedChunk,
    EncodedFile,
    FilePublicKey,
    IdentificationString,
    PossessionProof,
    ProofClaim,
)
from audita.services.pdp_service import (
    challenge_indexes,
    derive_file_id,
    pdp_checkproof,
    pdp_genchal,
    pdp_genproof,
    pdp_keygen,
    pdp_tag,
)
from audita.utils.chunking import FileChunker

logger = get_logger(__name__)

E = TypeVar("E", PossessionProof, ProofClaim)


def bc_keygen(seed: bytes) -> SigKeyPair:
    return sig_keygen(b"block-creator:" + seed)


def sn_keygen(seed: bytes) -> SigKeyPair:
    return sig_keygen(b"storage-node:" + seed)


def setup(
    data: bytes,
    chunk_size: int,
    security_parameter: int,
    seed: bytes,
    max_challenge: Optional[int] = None,
) -> EncodedFile:
    """Split a file into chunks and tag each one under a fresh per-file key"""
    chunked = FileChunker(chunk_size).chunk_bytes(data)
    keys = pdp_keygen(security_parameter, seed, chunk_size=chunk_size, max_challenge=max_challenge)
    if keys.public.chunk_capacity < chunk_size:
        raise InternalException("PDP key cannot hold a full chunk")

    chunks = tuple(
        EncodedChunk(data=chunk, tag=pdp_tag(keys, index, chunk))
        for index, chunk in enumerate(chunked.chunks)
    )
    file_public_key = FilePublicKey(
        file_id=keys.file_id,
        n=chunked.n,
        chunk_size=chunk_size,
        file_length=chunked.file_length,
        pdp=keys.public,
    )
    logger.info("file_setup", file_id=keys.file_id.hex(), n=chunked.n, modulus_bits=security_parameter)
    return EncodedFile(file_public_key=file_public_key, chunks=chunks)


def describe_file(n: int, seed: bytes, chunk_size: Optional[int] = None) -> FilePublicKey:
    """File key without PDP material, for index-bookkeeping runs.

    The file id matches the one :func:`setup` derives from the same seed, so both
    modes produce identical challenges.
    """
    if n < 1:
        raise ParameterException(f"file must have at least one chunk, got n={n}")
    chunk_size = chunk_size or settings.CHUNK_SIZE
    return FilePublicKey(
        file_id=derive_file_id(seed), n=n, chunk_size=chunk_size, file_length=n * chunk_size
    )


def assignment_indexes(file_public_key: FilePublicKey, storage_node: bytes, m: int) -> Tuple[int, ...]:
    if m < 1 or m > file_public_key.n:
        raise ParameterException(f"m={m} must lie in [1, n={file_public_key.n}]")
    return _sample_assignment(file_public_key.n, storage_node, m)


@lru_cache(maxsize=128)
def _sample_assignment(n: int, storage_node: bytes, m: int) -> Tuple[int, ...]:
    return tuple(sample_without_replacement(HashDomain.H1_CHUNK_SAMPLING, storage_node, n, m))


def get_chunks(
    file_public_key: FilePublicKey,
    encoded_file: Optional[EncodedFile],
    storage_node: bytes,
    m: int,
) -> ChunkAssignment:
    indexes = assignment_indexes(file_public_key, storage_node, m)
    held = {} if encoded_file is None else {i: encoded_file.chunks[i] for i in indexes}
    return ChunkAssignment(
        storage_node=storage_node,
        file_id=file_public_key.file_id,
        indexes=indexes,
        held_chunks=held,
    )


def elect_leader(block_creators: Sequence[bytes], seed: bytes) -> bytes:
    if not block_creators:
        raise ParameterException("block-creator registry is empty")
    return block_creators[hash_to_index(HashDomain.LEADER, seed, len(block_creators))]


def make_idstr(block_creators: Sequence[bytes], seed: bytes, timestamp: int) -> IdentificationString:
    return IdentificationString(
        leader_public_key=elect_leader(block_creators, seed), seed=seed, timestamp=timestamp
    )


def elected_storage_nodes(
    registry: Sequence[bytes], idstr: IdentificationString, k: int
) -> Tuple[bytes, ...]:
    if not registry:
        raise ParameterException("storage-node registry is empty")
    if k < 1 or k > len(registry):
        raise ParameterException(f"cannot elect k={k} of {len(registry)} storage-nodes")
    positions = sample_without_replacement(
        HashDomain.H2_NODE_SAMPLING, idstr.to_bytes(), len(registry), k
    )
    return tuple(registry[position] for position in positions)


def elect(
    registry: Sequence[bytes],
    block_creators: Sequence[bytes],
    seed: bytes,
    timestamp: int,
    k: int,
) -> Tuple[IdentificationString, Tuple[bytes, ...]]:
    """Leader first, then the storage-nodes sampled from the resulting idstr"""
    idstr = make_idstr(block_creators, seed, timestamp)
    return idstr, elected_storage_nodes(registry, idstr, k)


def challenge_seed(file_public_key: FilePublicKey, storage_node: bytes, idstr: IdentificationString) -> bytes:
    return hash(
        HashDomain.H3_CHALLENGE_SEED, file_public_key.file_id + storage_node + idstr.to_bytes()
    )


def derive_challenge(
    file_public_key: FilePublicKey,
    storage_node: bytes,
    idstr: IdentificationString,
    d: int,
    index_space: Sequence[int],
) -> Challenge:
    if d < 0 or d > len(index_space):
        raise ParameterException(f"challenge size d={d} exceeds m={len(index_space)}")
    return pdp_genchal(d, index_space, challenge_seed(file_public_key, storage_node, idstr))


def derive_challenge_indexes(
    file_public_key: FilePublicKey,
    storage_node: bytes,
    idstr: IdentificationString,
    d: int,
    index_space: Sequence[int],
) -> Tuple[int, ...]:
    if d < 0 or d > len(index_space):
        raise ParameterException(f"challenge size d={d} exceeds m={len(index_space)}")
    return challenge_indexes(d, index_space, challenge_seed(file_public_key, storage_node, idstr))


def prove(
    file_public_key: FilePublicKey,
    keys: SigKeyPair,
    idstr: IdentificationString,
    assignment: ChunkAssignment,
    d: int,
) -> PossessionProof:
    public = file_public_key.pdp
    if public is None:
        raise ParameterException("file key carries no PDP material")

    chal = derive_challenge(file_public_key, keys.public_key, idstr, d, assignment.indexes)
    for index in chal.indexes:
        if index not in assignment.held_chunks:
            raise DataLossException(f"challenged chunk {index} is not held", index=index)

    chunks = {i: assignment.held_chunks[i].data for i in chal.indexes}
    tags = {i: assignment.held_chunks[i].tag for i in chal.indexes}
    pdp_proof = pdp_genproof(public, chal, chunks, tags)
    signature = sign(keys.secret_key, pdp_proof.to_bytes(public.modulus_bytes))
    return PossessionProof(
        pdp_proof=pdp_proof, signature=signature, prover=keys.public_key, file_id=file_public_key.file_id
    )


def claim(
    file_public_key: FilePublicKey,
    storage_node: bytes,
    idstr: IdentificationString,
    assignment: ChunkAssignment,
    d: int,
    lost: Sequence[int] = (),
) -> ProofClaim:
    """Bookkeeping counterpart of :func:`prove`: the challenged indexes and whether all are intact"""
    challenged = derive_challenge_indexes(file_public_key, storage_node, idstr, d, assignment.indexes)
    lost_set = set(lost)
    return ProofClaim(
        prover=storage_node,
        file_id=file_public_key.file_id,
        challenged=challenged,
        intact=not any(i in lost_set for i in challenged),
    )


def prove_multi(
    files: Sequence[Tuple[FilePublicKey, ChunkAssignment]],
    keys: SigKeyPair,
    idstr: IdentificationString,
    d: int,
) -> List[PossessionProof]:
    return [prove(file_public_key, keys, idstr, assignment, d) for file_public_key, assignment in files]


def create(keys: SigKeyPair, block: Block) -> Block:
    """Seal a block with the leader's key"""
    if block.leader_public_key != keys.public_key:
        raise ParameterException("only the elected leader may create the block")
    return block.signed(sign(keys.secret_key, block.body()))


def verify_possession(
    file_public_key: FilePublicKey,
    idstr: IdentificationString,
    proof: PossessionProof,
    d: int,
    m: int,
) -> bool:
    public = file_public_key.pdp
    if public is None or proof.file_id != file_public_key.file_id:
        return False
    # an empty challenge proves nothing about the held chunks
    if not 1 <= d <= m:
        return False
    try:
        if not sig_verify(proof.prover, proof.pdp_proof.to_bytes(public.modulus_bytes), proof.signature):
            return False
        index_space = assignment_indexes(file_public_key, proof.prover, m)
        chal = derive_challenge(file_public_key, proof.prover, idstr, d, index_space)
    except (BaseAuditaException, ValueError, OverflowError) as e:
        logger.debug("possession_rejected", prover=proof.prover.hex(), error=str(e))
        return False
    return pdp_checkproof(public, chal, proof.pdp_proof)


def verify_claim(
    file_public_key: FilePublicKey,
    idstr: IdentificationString,
    proof: ProofClaim,
    d: int,
    m: int,
) -> bool:
    if proof.file_id != file_public_key.file_id or not proof.intact or not 1 <= d <= m:
        return False
    try:
        index_space = assignment_indexes(file_public_key, proof.prover, m)
        expected = derive_challenge_indexes(file_public_key, proof.prover, idstr, d, index_space)
    except BaseAuditaException:
        return False
    return tuple(proof.challenged) == expected


def verify_leader(view: ChainView, idstr: IdentificationString, block: Block) -> bool:
    """idstr names the oracle-elected leader and the block is sealed by it for that timestamp"""
    try:
        if idstr.leader_public_key != elect_leader(view.block_creators, idstr.seed):
            return False
        if block.leader_public_key != idstr.leader_public_key:
            return False
        if block.height != idstr.timestamp or block.idstr_digest != idstr.digest:
            return False
        return sig_verify(block.leader_public_key, block.body(), block.signature)
    except BaseAuditaException as e:
        logger.debug("leader_rejected", error=str(e))
        return False


def _verify_bundle(
    file_public_keys: Sequence[FilePublicKey],
    view: ChainView,
    idstr: IdentificationString,
    block: Block,
    proofs: Sequence[E],
    d: int,
    k: int,
    l: int,  # noqa: E741
    check: Callable[[FilePublicKey, IdentificationString, E, int, int], bool],
) -> bool:
    if not verify_leader(view, idstr, block):
        return False
    if not file_public_keys:
        return not proofs

    registry = view.storage_nodes
    if not registry:
        return False
    k_eff = min(k, len(registry))
    l_eff = min(l, k_eff)
    try:
        elected = set(elected_storage_nodes(registry, idstr, k_eff))
    except BaseAuditaException:
        return False

    keys_by_id = {key.file_id: key for key in file_public_keys}
    if len(keys_by_id) != len(file_public_keys):
        return False
    if len(proofs) != l_eff * len(file_public_keys):
        return False

    per_prover: Dict[bytes, set] = defaultdict(set)
    for proof in proofs:
        if proof.prover not in elected or proof.file_id not in keys_by_id:
            return False
        if proof.file_id in per_prover[proof.prover]:
            return False
        per_prover[proof.prover].add(proof.file_id)
    if len(per_prover) != l_eff:
        return False

    return all(check(keys_by_id[proof.file_id], idstr, proof, d, view.m) for proof in proofs)


def verify_multi(
    file_public_keys: Sequence[FilePublicKey],
    view: ChainView,
    idstr: IdentificationString,
    block: Block,
    proofs: Sequence[PossessionProof],
    d: int,
    k: int,
    l: int,  # noqa: E741
) -> bool:
    """Accept iff l distinct elected nodes each proved every one of the c files"""
    return _verify_bundle(file_public_keys, view, idstr, block, proofs, d, k, l, verify_possession)


def verify_extension(
    file_public_key: FilePublicKey,
    view: ChainView,
    idstr: IdentificationString,
    block: Block,
    proofs: Sequence[PossessionProof],
    d: int,
    k: int,
    l: int,  # noqa: E741
) -> bool:
    return verify_multi([file_public_key], view, idstr, block, proofs, d, k, l)


def verify_claims(
    file_public_keys: Sequence[FilePublicKey],
    view: ChainView,
    idstr: IdentificationString,
    block: Block,
    proofs: Sequence[ProofClaim],
    d: int,
    k: int,
    l: int,  # noqa: E741
) -> bool:
    """Election and challenge checks of :func:`verify_multi` without modular arithmetic"""
    return _verify_bundle(file_public_keys, view, idstr, block, proofs, d, k, l, verify_claim)
