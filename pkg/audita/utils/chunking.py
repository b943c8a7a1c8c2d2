from dataclasses import dataclass
from typing import List

from audita.core.exceptions import ParameterException
from audita.core.logging import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class ChunkedFile:
    chunks: List[bytes]
    chunk_size: int
    file_length: int

    @property
    def n(self) -> int:
        return len(self.chunks)


class FileChunker:
    """Utility for splitting files into fixed-size chunks"""

    def __init__(self, chunk_size: int):
        if chunk_size <= 0:
            raise ParameterException(f"chunk size must be positive, got {chunk_size}")
        self.chunk_size = chunk_size

    def chunk_bytes(self, data: bytes) -> ChunkedFile:
        """Split data into chunks, zero-padding the last one"""
        if not data:
            raise ParameterException("cannot chunk an empty file")

        chunks = [
            self.pad(data[offset:offset + self.chunk_size])
            for offset in range(0, len(data), self.chunk_size)
        ]

        logger.info("file_chunked", chunks=len(chunks), file_length=len(data), chunk_size=self.chunk_size)
        return ChunkedFile(chunks=chunks, chunk_size=self.chunk_size, file_length=len(data))

    def pad(self, chunk: bytes) -> bytes:
        if len(chunk) > self.chunk_size:
            raise ParameterException(f"chunk of {len(chunk)} bytes exceeds chunk size {self.chunk_size}")
        return chunk + b"\x00" * (self.chunk_size - len(chunk))


def split_blocks(chunk: bytes, block_bytes: int, blocks: int) -> List[int]:
    """Read a chunk as ``blocks`` big-endian integers of ``block_bytes`` each"""
    if len(chunk) > block_bytes * blocks:
        raise ParameterException(
            f"chunk of {len(chunk)} bytes does not fit {blocks} blocks of {block_bytes} bytes"
        )
    padded = chunk + b"\x00" * (block_bytes * blocks - len(chunk))
    return [
        int.from_bytes(padded[b * block_bytes:(b + 1) * block_bytes], "big")
        for b in range(blocks)
    ]
