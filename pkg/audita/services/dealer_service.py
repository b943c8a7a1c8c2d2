from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from audita.core.exceptions import UnrecoverableChunkException
from audita.core.logging import get_logger
from audita.models.protocol import ChunkAssignment, EncodedChunk, EncodedFile, FilePublicKey
from audita.models.simulation import ServeResult, StorageNode
from audita.services.protocol_service import assignment_indexes, get_chunks

logger = get_logger(__name__)


@dataclass
class LateJoinReport:
    node_id: int
    assignments: Dict[bytes, ChunkAssignment]
    refusers: List[StorageNode] = field(default_factory=list)
    fetched: int = 0


class Dealer:
    """Hands every storage-node the chunk subset its public key selects.

    The dealer keeps the encoded files only until the initial distribution;
    nodes joining later are served from the chunks current holders still keep.
    """

    def __init__(self, files: Sequence[FilePublicKey], m: int, encoded: Optional[Dict[bytes, EncodedFile]] = None):
        self.files = list(files)
        self.m = m
        self._encoded = dict(encoded or {})

    def distribute(self, node: StorageNode) -> None:
        for key in self.files:
            node.assignments[key.file_id] = get_chunks(
                key, self._encoded.get(key.file_id), node.public_key, self.m
            )
        logger.debug("node_served", node_id=node.node_id, files=len(self.files))

    def release_files(self) -> None:
        self._encoded.clear()

    def late_join(self, node: StorageNode, holders: Sequence[StorageNode]) -> LateJoinReport:
        """Recompute the node's assignment and fetch each chunk from the first holder that serves it.

        Holders that refuse are reported so the caller can mark them faulty; they
        are not asked again. Raises when some chunk has no serving holder.
        """
        report = LateJoinReport(node_id=node.node_id, assignments={})
        refused = set()
        missing: List[int] = []

        for key in self.files:
            indexes = assignment_indexes(key, node.public_key, self.m)
            held: Dict[int, EncodedChunk] = {}
            for index in indexes:
                served = False
                for holder in holders:
                    if holder.public_key == node.public_key or holder.public_key in refused:
                        continue
                    if not holder.holds(key.file_id, index):
                        continue
                    result, chunk = holder.serve_chunk(key.file_id, index)
                    if result == ServeResult.REFUSED:
                        refused.add(holder.public_key)
                        report.refusers.append(holder)
                        logger.warning("holder_refused", holder=holder.node_id, index=index)
                        continue
                    if result == ServeResult.SERVED:
                        if chunk is not None:
                            held[index] = chunk
                        served = True
                        report.fetched += 1
                        break
                if not served:
                    missing.append(index)
            report.assignments[key.file_id] = ChunkAssignment(
                storage_node=node.public_key, file_id=key.file_id, indexes=indexes, held_chunks=held
            )

        if missing:
            logger.error("unrecoverable_chunks", node_id=node.node_id, indexes=missing[:16], count=len(missing))
            raise UnrecoverableChunkException(
                missing, refusers=[holder.public_key for holder in report.refusers]
            )

        node.assignments.update(report.assignments)
        logger.info("late_join_served", node_id=node.node_id, fetched=report.fetched, refusers=len(report.refusers))
        return report
