from dataclasses import dataclass
from typing import Tuple

from audita.utils.encoding import Decoder, Encoder, int_to_bytes


@dataclass(frozen=True)
class PdpPublicKey:
    """Public verification material of one file: (N, e, g, file_id) plus block geometry"""

    modulus: int
    public_exponent: int
    generator: int
    file_id: bytes
    block_bytes: int
    blocks_per_chunk: int
    slack_bits: int

    @property
    def modulus_bits(self) -> int:
        return self.modulus.bit_length()

    @property
    def modulus_bytes(self) -> int:
        return (self.modulus_bits + 7) // 8

    @property
    def chunk_capacity(self) -> int:
        return self.block_bytes * self.blocks_per_chunk

    @property
    def aggregate_bound(self) -> int:
        """Exclusive upper bound on an honest aggregated data value M"""
        return 1 << (self.modulus_bits - self.slack_bits)

    def to_bytes(self) -> bytes:
        return (
            Encoder()
            .bigint(self.modulus)
            .bigint(self.public_exponent)
            .bigint(self.generator)
            .field(self.file_id)
            .uint(self.block_bytes, 4)
            .uint(self.blocks_per_chunk, 4)
            .uint(self.slack_bits, 4)
            .getvalue()
        )

    @classmethod
    def decode(cls, decoder: Decoder) -> "PdpPublicKey":
        return cls(
            modulus=decoder.bigint(),
            public_exponent=decoder.bigint(),
            generator=decoder.bigint(),
            file_id=decoder.field(),
            block_bytes=decoder.uint(4),
            blocks_per_chunk=decoder.uint(4),
            slack_bits=decoder.uint(4),
        )


@dataclass(frozen=True)
class PdpKeyPair:
    public: PdpPublicKey
    private_exponent: int
    prime_p: int
    prime_q: int

    @property
    def modulus(self) -> int:
        return self.public.modulus

    @property
    def public_exponent(self) -> int:
        return self.public.public_exponent

    @property
    def generator(self) -> int:
        return self.public.generator

    @property
    def file_id(self) -> bytes:
        return self.public.file_id

    def to_bytes(self) -> bytes:
        return (
            Encoder()
            .field(self.public.to_bytes())
            .bigint(self.private_exponent)
            .bigint(self.prime_p)
            .bigint(self.prime_q)
            .getvalue()
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "PdpKeyPair":
        decoder = Decoder(data)
        public_decoder = Decoder(decoder.field())
        public = PdpPublicKey.decode(public_decoder)
        public_decoder.finish()
        keys = cls(
            public=public,
            private_exponent=decoder.bigint(),
            prime_p=decoder.bigint(),
            prime_q=decoder.bigint(),
        )
        decoder.finish()
        return keys


@dataclass(frozen=True)
class ChunkTag:
    """Homomorphic tag of chunk ``index``: one value per PDP block of the chunk"""

    index: int
    values: Tuple[int, ...]

    def to_bytes(self, width: int) -> bytes:
        encoder = Encoder().uint(self.index).uint(len(self.values), 4)
        for value in self.values:
            encoder.bigint(value, width)
        return encoder.getvalue()

    @classmethod
    def decode(cls, decoder: Decoder) -> "ChunkTag":
        index = decoder.uint()
        count = decoder.uint(4)
        return cls(index=index, values=tuple(decoder.bigint() for _ in range(count)))


@dataclass(frozen=True)
class Challenge:
    d: int
    indexes: Tuple[int, ...]
    coefficients: Tuple[int, ...]
    seed: bytes
    index_space_digest: bytes

    def to_bytes(self) -> bytes:
        # indexes and coefficients are recomputed by the receiver, never trusted
        return Encoder().uint(self.d, 4).field(self.seed).field(self.index_space_digest).getvalue()


@dataclass(frozen=True)
class AggregatedBlock:
    tag: int   # T_b
    data: int  # M_b


@dataclass(frozen=True)
class PdpProof:
    blocks: Tuple[AggregatedBlock, ...]

    def to_bytes(self, width: int) -> bytes:
        encoder = Encoder().uint(len(self.blocks), 4)
        for block in self.blocks:
            encoder.field(int_to_bytes(block.tag, width)).field(int_to_bytes(block.data, width))
        return encoder.getvalue()

    @classmethod
    def decode(cls, decoder: Decoder) -> "PdpProof":
        count = decoder.uint(4)
        return cls(
            blocks=tuple(
                AggregatedBlock(tag=decoder.bigint(), data=decoder.bigint()) for _ in range(count)
            )
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "PdpProof":
        decoder = Decoder(data)
        proof = cls.decode(decoder)
        decoder.finish()
        return proof
