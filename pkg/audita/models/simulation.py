from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Set, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from audita.config import settings
from audita.core.crypto import SigKeyPair
from audita.models.protocol import ChunkAssignment, EncodedChunk


class SimulationMode(str, Enum):
    FULL_CRYPTO = "full_crypto"
    COVERAGE_ONLY = "coverage_only"


class AdversaryKind(str, Enum):
    OUTSOURCER = "outsourcer"  # value: extra latency in ms
    DELETER = "deleter"        # value: fraction of held chunks deleted
    REFUSER = "refuser"        # refuses to serve chunks to late joiners


class AdversarySpec(BaseModel):
    node_id: int = Field(..., ge=0)
    kind: AdversaryKind
    value: float = 0.0

    @model_validator(mode="after")
    def check_value(self) -> "AdversarySpec":
        if self.kind == AdversaryKind.DELETER and not 0.0 <= self.value <= 1.0:
            raise ValueError(f"deleted fraction {self.value} must lie in [0, 1]")
        if self.kind == AdversaryKind.OUTSOURCER and self.value < 0:
            raise ValueError("outsourcing penalty must be non-negative")
        return self


class SimConfig(BaseModel):
    n: int = Field(..., ge=1)
    m: int = Field(..., ge=1)
    k: int = Field(..., ge=1)
    d: int = Field(..., ge=1)
    l: int = Field(..., ge=1)  # noqa: E741
    node_count: int = Field(..., ge=1)
    file_count: int = Field(1, ge=1)
    master_seed: bytes = b"\x00" * 32
    max_timestamps: int = Field(..., ge=0)
    mode: SimulationMode = SimulationMode.COVERAGE_ONLY

    latency_base_min_ms: float = Field(default_factory=lambda: settings.SIM_LATENCY_BASE_MIN_MS, ge=0)
    latency_base_max_ms: float = Field(default_factory=lambda: settings.SIM_LATENCY_BASE_MAX_MS, ge=0)
    jitter_mu: float = Field(default_factory=lambda: settings.SIM_JITTER_MU)
    jitter_sigma: float = Field(default_factory=lambda: settings.SIM_JITTER_SIGMA, ge=0)
    adversaries: List[AdversarySpec] = Field(default_factory=list)

    chunk_size: int = Field(default_factory=lambda: settings.CHUNK_SIZE, ge=1)
    modulus_bits: int = Field(default_factory=lambda: settings.PDP_MODULUS_BITS)
    alpha: Optional[int] = Field(None, ge=1)
    storage_duration: Optional[int] = Field(None, ge=1)
    block_creators: int = Field(default_factory=lambda: settings.SIM_BLOCK_CREATORS, ge=1)
    late_joins: List[int] = Field(default_factory=list)
    forge_on_delete: bool = False
    evaluate_all_responses: bool = False
    max_retries: int = Field(32, ge=0)

    @field_validator("master_seed", mode="before")
    @classmethod
    def parse_seed(cls, value):
        if isinstance(value, str):
            return bytes.fromhex(value)
        return value

    @model_validator(mode="after")
    def check_invariants(self) -> "SimConfig":
        if not self.d <= self.m <= self.n:
            raise ValueError(f"need d <= m <= n, got d={self.d} m={self.m} n={self.n}")
        if not self.l <= self.k <= self.node_count:
            raise ValueError(f"need l <= k <= node_count, got l={self.l} k={self.k} nodes={self.node_count}")
        if self.latency_base_min_ms > self.latency_base_max_ms:
            raise ValueError("latency_base_min_ms exceeds latency_base_max_ms")
        if self.alpha is not None and self.alpha % self.l != 0:
            raise ValueError(f"alpha={self.alpha} must be divisible by l={self.l}")
        if any(t < 0 or t > self.max_timestamps for t in self.late_joins):
            raise ValueError("late joins must happen within [0, max_timestamps]")
        ids = [spec.node_id for spec in self.adversaries]
        if len(ids) != len(set(ids)):
            raise ValueError("a node may carry at most one adversary behaviour")
        if any(node_id >= self.total_nodes for node_id in ids):
            raise ValueError("adversary node id out of range")
        return self

    @property
    def total_nodes(self) -> int:
        return self.node_count + len(self.late_joins)

    @property
    def payout(self) -> int:
        """alpha, defaulting to one coin per winning proof"""
        return self.alpha if self.alpha is not None else self.l

    @property
    def duration(self) -> int:
        return self.storage_duration if self.storage_duration is not None else max(1, self.max_timestamps)

    def adversary(self, node_id: int) -> Optional[AdversarySpec]:
        for spec in self.adversaries:
            if spec.node_id == node_id:
                return spec
        return None


class ServeResult(str, Enum):
    SERVED = "served"
    REFUSED = "refused"
    MISSING = "missing"


@dataclass
class StorageNode:
    node_id: int
    keys: SigKeyPair
    base_latency_ms: float
    adversary: Optional[AdversarySpec] = None
    assignments: Dict[bytes, ChunkAssignment] = field(default_factory=dict)
    lost: Dict[bytes, Set[int]] = field(default_factory=dict)

    @property
    def public_key(self) -> bytes:
        return self.keys.public_key

    @property
    def kind(self) -> Optional[AdversaryKind]:
        return None if self.adversary is None else self.adversary.kind

    @property
    def penalty_ms(self) -> float:
        return self.adversary.value if self.kind == AdversaryKind.OUTSOURCER else 0.0

    def holds(self, file_id: bytes, index: int) -> bool:
        assignment = self.assignments.get(file_id)
        if assignment is None or index in self.lost.get(file_id, ()):
            return False
        return index in assignment.index_set

    def serve_chunk(self, file_id: bytes, index: int) -> Tuple[ServeResult, Optional[EncodedChunk]]:
        if self.kind == AdversaryKind.REFUSER:
            return ServeResult.REFUSED, None
        if not self.holds(file_id, index):
            return ServeResult.MISSING, None
        return ServeResult.SERVED, self.assignments[file_id].held_chunks.get(index)


@dataclass
class CoverageState:
    file_id: bytes
    n: int
    proven: np.ndarray = field(init=False)
    proven_count: int = 0
    history: List[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.proven = np.zeros(self.n, dtype=bool)

    def mark(self, indexes) -> None:
        idx = np.fromiter(indexes, dtype=np.int64)
        if idx.size == 0:
            return
        fresh = np.unique(idx[~self.proven[idx]])
        self.proven[fresh] = True
        self.proven_count += int(fresh.size)

    def close_timestamp(self) -> float:
        fraction = self.proven_count / self.n
        self.history.append(fraction)
        return fraction


@dataclass(frozen=True)
class Response:
    node_id: int
    public_key: bytes
    arrival_ms: float
    valid: bool
    reason: str = ""


@dataclass
class RaceOutcome:
    timestamp: int
    attempt: int
    leader: bytes
    elected: Tuple[int, ...]
    responders: List[Response]
    winners: Tuple[int, ...]
    accepted: bool

    @property
    def rejected(self) -> List[Response]:
        return [response for response in self.responders if not response.valid]


@dataclass
class AdversaryStats:
    node_id: int
    kind: AdversaryKind
    value: float
    elected: int = 0
    evaluated: int = 0
    wins: int = 0
    failures: int = 0
    rewards: int = 0
    reward_share: float = 0.0
    faulty: bool = False

    @property
    def failure_rate(self) -> float:
        return self.failures / self.evaluated if self.evaluated else 0.0


@dataclass(frozen=True)
class FailedJoin:
    """A late join abandoned because some assigned chunk had no serving holder"""

    timestamp: int
    node_id: int
    missing: Tuple[int, ...]
    refusers: Tuple[int, ...]
