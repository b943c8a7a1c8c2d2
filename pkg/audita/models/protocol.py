from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Dict, FrozenSet, Optional, Tuple

from audita.core.crypto import HashDomain, SigKeyPair, hash
from audita.models.pdp import ChunkTag, PdpProof, PdpPublicKey
from audita.utils.encoding import Decoder, Encoder


class NodeRole(str, Enum):
    BLOCK_CREATOR = "block_creator"
    STORAGE_NODE = "storage_node"
    DEALER = "dealer"


@dataclass(frozen=True)
class NodeIdentity:
    role: NodeRole
    keys: SigKeyPair
    registry_position: int = -1

    @property
    def public_key(self) -> bytes:
        return self.keys.public_key


@dataclass(frozen=True)
class FilePublicKey:
    """Published file key: PDP verification material plus file geometry.

    ``pdp`` is None for index-bookkeeping simulations that never run modular arithmetic.
    """

    file_id: bytes
    n: int
    chunk_size: int
    file_length: int
    pdp: Optional[PdpPublicKey] = None

    def to_bytes(self) -> bytes:
        encoder = (
            Encoder()
            .field(self.file_id)
            .uint(self.n)
            .uint(self.chunk_size, 4)
            .uint(self.file_length)
            .flag(self.pdp is not None)
        )
        if self.pdp is not None:
            encoder.field(self.pdp.to_bytes())
        return encoder.getvalue()

    @classmethod
    def decode(cls, decoder: Decoder) -> "FilePublicKey":
        file_id = decoder.field()
        n = decoder.uint()
        chunk_size = decoder.uint(4)
        file_length = decoder.uint()
        pdp = None
        if decoder.flag():
            inner = Decoder(decoder.field())
            pdp = PdpPublicKey.decode(inner)
            inner.finish()
        return cls(file_id=file_id, n=n, chunk_size=chunk_size, file_length=file_length, pdp=pdp)

    @classmethod
    def from_bytes(cls, data: bytes) -> "FilePublicKey":
        decoder = Decoder(data)
        key = cls.decode(decoder)
        decoder.finish()
        return key


@dataclass(frozen=True)
class EncodedChunk:
    data: bytes
    tag: ChunkTag


@dataclass(frozen=True)
class EncodedFile:
    file_public_key: FilePublicKey
    chunks: Tuple[EncodedChunk, ...]

    @property
    def n(self) -> int:
        return len(self.chunks)


@dataclass
class ChunkAssignment:
    """A node's share of one file. ``held_chunks`` is mutable: nodes may lose data."""

    storage_node: bytes
    file_id: bytes
    indexes: Tuple[int, ...]
    held_chunks: Dict[int, EncodedChunk] = field(default_factory=dict)

    @property
    def m(self) -> int:
        return len(self.indexes)

    @cached_property
    def index_set(self) -> FrozenSet[int]:
        return frozenset(self.indexes)


@dataclass(frozen=True)
class IdentificationString:
    leader_public_key: bytes
    seed: bytes
    timestamp: int

    def to_bytes(self) -> bytes:
        return Encoder().field(self.leader_public_key).field(self.seed).uint(self.timestamp).getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "IdentificationString":
        decoder = Decoder(data)
        idstr = cls(leader_public_key=decoder.field(), seed=decoder.field(), timestamp=decoder.uint())
        decoder.finish()
        return idstr

    @property
    def digest(self) -> bytes:
        return hash(HashDomain.BLOCK, self.to_bytes())


@dataclass(frozen=True)
class PossessionProof:
    pdp_proof: PdpProof
    signature: bytes
    prover: bytes
    file_id: bytes

    def to_bytes(self, width: int) -> bytes:
        return (
            Encoder()
            .field(self.pdp_proof.to_bytes(width))
            .field(self.signature)
            .field(self.prover)
            .field(self.file_id)
            .getvalue()
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "PossessionProof":
        decoder = Decoder(data)
        proof = cls(
            pdp_proof=PdpProof.from_bytes(decoder.field()),
            signature=decoder.field(),
            prover=decoder.field(),
            file_id=decoder.field(),
        )
        decoder.finish()
        return proof


@dataclass(frozen=True)
class ProofClaim:
    """Index-only stand-in for a possession proof in coverage bookkeeping runs"""

    prover: bytes
    file_id: bytes
    challenged: Tuple[int, ...]
    intact: bool = True


@dataclass(frozen=True)
class ChainView:
    """Public data a verifier recomputes elections and assignments from"""

    storage_nodes: Tuple[bytes, ...]
    block_creators: Tuple[bytes, ...]
    m: int
