from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, model_validator

from audita.core.crypto import DIGEST_SIZE, HashDomain, hash
from audita.core.exceptions import DecodeException
from audita.models.protocol import FilePublicKey
from audita.utils.encoding import Decoder, Encoder

ZERO_DIGEST = b"\x00" * DIGEST_SIZE


class ProtocolParams(BaseModel):
    """Public audit parameters every verifier agrees on"""

    m: int = Field(..., ge=1)
    k: int = Field(..., ge=1)
    d: int = Field(..., ge=1)
    l: int = Field(..., ge=1)  # noqa: E741

    @model_validator(mode="after")
    def check_ordering(self) -> "ProtocolParams":
        if self.d > self.m:
            raise ValueError(f"d={self.d} must not exceed m={self.m}")
        if self.l > self.k:
            raise ValueError(f"l={self.l} must not exceed k={self.k}")
        return self

    def committee(self, registry_size: int) -> Tuple[int, int]:
        """(k', l') for a registry that may still be smaller than k"""
        k = min(self.k, registry_size)
        return k, min(self.l, k)

    model_config = {"frozen": True}


class TransactionKind(str, Enum):
    JOIN = "join"
    STORE = "store"
    REWARD = "reward"
    FAULT = "fault"


_KIND_CODES = {kind: code for code, kind in enumerate(TransactionKind, start=1)}
_KINDS_BY_CODE = {code: kind for kind, code in _KIND_CODES.items()}


@dataclass(frozen=True)
class Transaction:
    """Signed ledger transaction.

    ``subject`` is the joining node (join), the beneficiary (reward) or the
    faulty node (fault). ``amount`` is the escrowed funds (store) or the payout
    (reward). ``source`` links a reward to its store transaction.
    """

    kind: TransactionKind
    author: bytes
    nonce: int
    subject: bytes = b""
    file_public_key: Optional[FilePublicKey] = None
    duration: int = 0
    alpha: int = 0
    amount: int = 0
    source: bytes = b""
    signature: bytes = b""

    def body(self) -> bytes:
        encoder = (
            Encoder()
            .uint(_KIND_CODES[self.kind], 1)
            .field(self.author)
            .uint(self.nonce)
            .field(self.subject)
            .flag(self.file_public_key is not None)
        )
        if self.file_public_key is not None:
            encoder.field(self.file_public_key.to_bytes())
        return (
            encoder.uint(self.duration)
            .uint(self.alpha)
            .uint(self.amount)
            .field(self.source)
            .getvalue()
        )

    @property
    def tx_id(self) -> bytes:
        return hash(HashDomain.TRANSACTION, self.body())

    def to_bytes(self) -> bytes:
        return Encoder().field(self.body()).field(self.signature).getvalue()

    def signed(self, signature: bytes) -> "Transaction":
        return replace(self, signature=signature)

    @classmethod
    def decode(cls, decoder: Decoder) -> "Transaction":
        body = Decoder(decoder.field())
        signature = decoder.field()
        code = body.uint(1)
        if code not in _KINDS_BY_CODE:
            raise DecodeException(f"unknown transaction kind {code}")
        author = body.field()
        nonce = body.uint()
        subject = body.field()
        file_public_key = FilePublicKey.from_bytes(body.field()) if body.flag() else None
        tx = cls(
            kind=_KINDS_BY_CODE[code],
            author=author,
            nonce=nonce,
            subject=subject,
            file_public_key=file_public_key,
            duration=body.uint(),
            alpha=body.uint(),
            amount=body.uint(),
            source=body.field(),
            signature=signature,
        )
        body.finish()
        return tx


@dataclass(frozen=True)
class Block:
    height: int
    previous_digest: bytes
    leader_public_key: bytes
    idstr_digest: bytes
    transactions: Tuple[Transaction, ...]
    signature: bytes = b""

    def body(self) -> bytes:
        encoder = (
            Encoder()
            .uint(self.height)
            .field(self.previous_digest)
            .field(self.leader_public_key)
            .field(self.idstr_digest)
            .uint(len(self.transactions), 4)
        )
        for tx in self.transactions:
            encoder.field(tx.to_bytes())
        return encoder.getvalue()

    def to_bytes(self) -> bytes:
        return Encoder().field(self.body()).field(self.signature).getvalue()

    @property
    def digest(self) -> bytes:
        return hash(HashDomain.BLOCK, self.to_bytes())

    def signed(self, signature: bytes) -> "Block":
        return replace(self, signature=signature)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Block":
        outer = Decoder(data)
        body = Decoder(outer.field())
        signature = outer.field()
        outer.finish()

        height = body.uint()
        previous_digest = body.field()
        leader_public_key = body.field()
        idstr_digest = body.field()
        count = body.uint(4)
        transactions = []
        for _ in range(count):
            inner = Decoder(body.field())
            transactions.append(Transaction.decode(inner))
            inner.finish()
        body.finish()
        return cls(
            height=height,
            previous_digest=previous_digest,
            leader_public_key=leader_public_key,
            idstr_digest=idstr_digest,
            transactions=tuple(transactions),
            signature=signature,
        )


@dataclass
class Escrow:
    handle: bytes
    payer: bytes
    file_public_key: FilePublicKey
    duration: int
    alpha: int
    remaining: int
    timestamps_paid: int = 0
    activated_at: int = 0

    @property
    def active(self) -> bool:
        return self.timestamps_paid < self.duration


@dataclass
class LedgerState:
    """Mutable account state; replaced wholesale when a block is accepted"""

    registry: List[bytes] = field(default_factory=list)
    faulty: List[bytes] = field(default_factory=list)
    balances: Dict[bytes, int] = field(default_factory=dict)
    escrows: Dict[bytes, Escrow] = field(default_factory=dict)
    nonces: Dict[bytes, int] = field(default_factory=dict)

    def copy(self) -> "LedgerState":
        return LedgerState(
            registry=list(self.registry),
            faulty=list(self.faulty),
            balances=dict(self.balances),
            escrows={handle: replace(escrow) for handle, escrow in self.escrows.items()},
            nonces=dict(self.nonces),
        )
