"""JSON documents exchanged between CLI invocations. Binary values are hex strings."""
from pathlib import Path
from typing import List, Type, TypeVar, Union

from pydantic import BaseModel, ValidationError

from audita.core.crypto import SigKeyPair
from audita.core.exceptions import DecodeException, ParameterException
from audita.models.pdp import ChunkTag
from audita.models.protocol import (
    ChunkAssignment,
    EncodedChunk,
    EncodedFile,
    FilePublicKey,
    IdentificationString,
    NodeIdentity,
    NodeRole,
    PossessionProof,
)
from audita.utils.encoding import Decoder, from_hex

M = TypeVar("M", bound=BaseModel)


def read_manifest(path: Union[str, Path], model: Type[M]) -> M:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ParameterException(f"cannot read {path}: {e}") from e
    try:
        return model.model_validate_json(text)
    except ValidationError as e:
        raise DecodeException(f"{path} is not a valid {model.__name__}: {e}") from e


def write_manifest(path: Union[str, Path], manifest: BaseModel) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(manifest.model_dump_json(indent=2) + "\n")
    return path


class KeyManifest(BaseModel):
    role: NodeRole
    keypair: str

    @classmethod
    def build(cls, identity: NodeIdentity) -> "KeyManifest":
        return cls(role=identity.role, keypair=identity.keys.to_hex())

    def keys(self) -> SigKeyPair:
        return SigKeyPair.from_hex(self.keypair)

    def identity(self) -> NodeIdentity:
        return NodeIdentity(role=self.role, keys=self.keys())

    @property
    def public_key(self) -> bytes:
        return self.keys().public_key


class FileKeyManifest(BaseModel):
    file_public_key: str

    def key(self) -> FilePublicKey:
        return FilePublicKey.from_bytes(from_hex(self.file_public_key))


class ChunkRecord(BaseModel):
    index: int
    data: str
    tag: str

    @classmethod
    def build(cls, index: int, chunk: EncodedChunk, width: int) -> "ChunkRecord":
        return cls(index=index, data=chunk.data.hex(), tag=chunk.tag.to_bytes(width).hex())

    def chunk(self) -> EncodedChunk:
        decoder = Decoder(from_hex(self.tag))
        tag = ChunkTag.decode(decoder)
        decoder.finish()
        if tag.index != self.index:
            raise DecodeException(f"tag of chunk {self.index} names index {tag.index}")
        return EncodedChunk(data=from_hex(self.data), tag=tag)


class ChunkStoreManifest(BaseModel):
    """Tagged chunks of one file, as produced by setup"""

    file_public_key: str
    chunks: List[ChunkRecord]

    @classmethod
    def build(cls, encoded: EncodedFile) -> "ChunkStoreManifest":
        key = encoded.file_public_key
        width = key.pdp.modulus_bytes if key.pdp is not None else 0
        return cls(
            file_public_key=key.to_bytes().hex(),
            chunks=[ChunkRecord.build(i, chunk, width) for i, chunk in enumerate(encoded.chunks)],
        )

    def encoded_file(self) -> EncodedFile:
        chunks = sorted(self.chunks, key=lambda record: record.index)
        if [record.index for record in chunks] != list(range(len(chunks))):
            raise DecodeException("chunk store is not a contiguous index range")
        return EncodedFile(
            file_public_key=FilePublicKey.from_bytes(from_hex(self.file_public_key)),
            chunks=tuple(record.chunk() for record in chunks),
        )


class AssignmentManifest(BaseModel):
    storage_node: str
    file_id: str
    indexes: List[int]
    chunks: List[ChunkRecord]

    @classmethod
    def build(cls, assignment: ChunkAssignment, width: int) -> "AssignmentManifest":
        return cls(
            storage_node=assignment.storage_node.hex(),
            file_id=assignment.file_id.hex(),
            indexes=list(assignment.indexes),
            chunks=[
                ChunkRecord.build(index, assignment.held_chunks[index], width)
                for index in assignment.indexes
                if index in assignment.held_chunks
            ],
        )

    def assignment(self) -> ChunkAssignment:
        return ChunkAssignment(
            storage_node=from_hex(self.storage_node),
            file_id=from_hex(self.file_id),
            indexes=tuple(self.indexes),
            held_chunks={record.index: record.chunk() for record in self.chunks},
        )


class ChallengeManifest(BaseModel):
    """A node's challenge; ``challenge`` is the wire form (d, seed, index-space digest)"""

    idstr: str
    storage_node: str
    d: int
    m: int
    challenge: str
    indexes: List[int]

    def identification(self) -> IdentificationString:
        return IdentificationString.from_bytes(from_hex(self.idstr))


class ProofManifest(BaseModel):
    idstr: str
    d: int
    m: int
    proof: str

    def identification(self) -> IdentificationString:
        return IdentificationString.from_bytes(from_hex(self.idstr))

    def possession_proof(self) -> PossessionProof:
        return PossessionProof.from_bytes(from_hex(self.proof))
