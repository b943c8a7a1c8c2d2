from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

from audita.core.crypto import HashDomain, SigKeyPair, hash, sig_verify, sign
from audita.core.exceptions import (
    BaseAuditaException,
    DecodeException,
    ParameterException,
    RejectedTransactionException,
)
from audita.core.logging import get_logger
from audita.models.ledger import (
    ZERO_DIGEST,
    Block,
    Escrow,
    LedgerState,
    ProtocolParams,
    Transaction,
    TransactionKind,
)
from audita.models.protocol import (
    ChainView,
    FilePublicKey,
    IdentificationString,
    PossessionProof,
    ProofClaim,
)
from audita.services.protocol_service import create, make_idstr, verify_multi

logger = get_logger(__name__)

Proof = Union[PossessionProof, ProofClaim]
ExtensionVerifier = Callable[
    [Sequence[FilePublicKey], ChainView, IdentificationString, Block, Sequence, int, int, int], bool
]


class ElectionOracle:
    """Beats the time for the network: one fresh seed per call"""

    def __init__(self, master_seed: bytes):
        self.master_seed = master_seed
        self.epoch = 0

    def next_seed(self) -> bytes:
        self.epoch += 1
        return hash(HashDomain.ORACLE, self.master_seed + self.epoch.to_bytes(8, "big"))


class Ledger:
    """Single-writer chain state machine.

    Submitted transactions wait in a pending pool and take effect only when a
    block carrying them is accepted. A stored file is audited from the block
    after the one that accepted its store transaction.
    """

    def __init__(
        self,
        params: ProtocolParams,
        block_creators: Sequence[bytes],
        allocations: Optional[Mapping[bytes, int]] = None,
        verifier: ExtensionVerifier = verify_multi,
        dealer: Optional[bytes] = None,
    ):
        if not block_creators:
            raise ParameterException("at least one block-creator is required")
        allocations = dict(allocations or {})
        if any(amount < 0 for amount in allocations.values()):
            raise ParameterException("allocations must be non-negative")

        self.params = params
        self.block_creators: Tuple[bytes, ...] = tuple(block_creators)
        self.dealer = dealer
        self.total_minted = sum(allocations.values())
        self.blocks: List[Block] = []
        self._verifier = verifier
        self._state = LedgerState(balances=allocations)
        self._pending: List[Transaction] = []
        self._pending_state: Optional[LedgerState] = None
        self._open_idstr: Optional[IdentificationString] = None

    @property
    def height(self) -> int:
        """Height of the next block"""
        return len(self.blocks)

    @property
    def tip_digest(self) -> bytes:
        return self.blocks[-1].digest if self.blocks else ZERO_DIGEST

    @property
    def registry(self) -> Tuple[bytes, ...]:
        return tuple(self._state.registry)

    @property
    def faulty(self) -> Tuple[bytes, ...]:
        return tuple(self._state.faulty)

    @property
    def eligible(self) -> Tuple[bytes, ...]:
        faulty = set(self._state.faulty)
        return tuple(node for node in self._state.registry if node not in faulty)

    @property
    def pending(self) -> Tuple[Transaction, ...]:
        return tuple(self._pending)

    def view(self) -> ChainView:
        return ChainView(storage_nodes=self.eligible, block_creators=self.block_creators, m=self.params.m)

    def active_escrows(self, height: Optional[int] = None) -> List[Escrow]:
        height = self.height if height is None else height
        return [
            escrow
            for escrow in self._state.escrows.values()
            if escrow.active and escrow.activated_at <= height
        ]

    def active_file_keys(self) -> List[FilePublicKey]:
        return [escrow.file_public_key for escrow in self.active_escrows()]

    def balance(self, node: bytes) -> int:
        return self._state.balances.get(node, 0)

    def balances(self) -> Dict[bytes, int]:
        return dict(self._state.balances)

    def escrow_remaining(self, handle: bytes) -> int:
        escrow = self._state.escrows.get(handle)
        return 0 if escrow is None else escrow.remaining

    def escrow_total(self) -> int:
        return sum(escrow.remaining for escrow in self._state.escrows.values())

    # submissions

    def _next_nonce(self, author: bytes) -> int:
        queued = sum(
            1 for tx in self._pending if tx.author == author and tx.kind != TransactionKind.REWARD
        )
        return self._state.nonces.get(author, 0) + queued

    def _pending_view(self) -> LedgerState:
        """State as it will be once every pending transaction is applied"""
        if self._pending_state is None:
            state = self._state.copy()
            for queued in self._pending:
                self._apply(state, queued, self.height)
            self._pending_state = state
        return self._pending_state

    def _submit(self, tx: Transaction, keys: SigKeyPair) -> Transaction:
        tx = tx.signed(sign(keys.secret_key, tx.body()))
        scratch = self._pending_view().copy()
        try:
            self._apply(scratch, tx, self.height)
        except RejectedTransactionException as e:
            logger.warning("transaction_rejected", kind=tx.kind.value, reason=e.detail)
            raise
        self._pending.append(tx)
        self._pending_state = scratch
        return tx

    def submit_join(self, keys: SigKeyPair) -> int:
        """Queue a join; returns the registry position the node will take"""
        node = keys.public_key
        tx = Transaction(
            kind=TransactionKind.JOIN, author=node, nonce=self._next_nonce(node), subject=node
        )
        self._submit(tx, keys)
        queued_joins = sum(1 for queued in self._pending if queued.kind == TransactionKind.JOIN)
        return len(self._state.registry) + queued_joins - 1

    def submit_store(
        self,
        file_public_key: FilePublicKey,
        duration: int,
        alpha: int,
        funds: int,
        payer: SigKeyPair,
    ) -> bytes:
        """Queue a store transaction escrowing ``duration * alpha`` coins; returns the escrow handle"""
        tx = Transaction(
            kind=TransactionKind.STORE,
            author=payer.public_key,
            nonce=self._next_nonce(payer.public_key),
            file_public_key=file_public_key,
            duration=duration,
            alpha=alpha,
            amount=funds,
        )
        return self._submit(tx, payer).tx_id

    def submit_fault(self, node: bytes, dealer: SigKeyPair) -> bytes:
        tx = Transaction(
            kind=TransactionKind.FAULT,
            author=dealer.public_key,
            nonce=self._next_nonce(dealer.public_key),
            subject=node,
        )
        tx_id = self._submit(tx, dealer).tx_id
        logger.warning("node_marked_faulty", node=node.hex())
        return tx_id

    # state transitions

    def _apply(self, state: LedgerState, tx: Transaction, height: int) -> None:
        try:
            if not sig_verify(tx.author, tx.body(), tx.signature):
                raise RejectedTransactionException("bad transaction signature")
        except DecodeException as e:
            raise RejectedTransactionException(f"malformed transaction: {e.detail}") from e

        if tx.kind != TransactionKind.REWARD:
            expected_nonce = state.nonces.get(tx.author, 0)
            if tx.nonce != expected_nonce:
                raise RejectedTransactionException(f"nonce {tx.nonce} != {expected_nonce}")
            state.nonces[tx.author] = expected_nonce + 1

        if tx.kind == TransactionKind.JOIN:
            if tx.subject != tx.author:
                raise RejectedTransactionException("join must be signed by the joining node")
            if tx.subject in state.registry:
                raise RejectedTransactionException("storage-node already joined")
            state.registry.append(tx.subject)

        elif tx.kind == TransactionKind.STORE:
            self._apply_store(state, tx, height)

        elif tx.kind == TransactionKind.FAULT:
            if self.dealer is None or tx.author != self.dealer:
                raise RejectedTransactionException("only the dealer may mark nodes faulty")
            if tx.subject not in state.registry:
                raise RejectedTransactionException("unknown storage-node")
            if tx.subject in state.faulty:
                raise RejectedTransactionException("storage-node already faulty")
            state.faulty.append(tx.subject)

        elif tx.kind == TransactionKind.REWARD:
            escrow = state.escrows.get(tx.source)
            if escrow is None or escrow.remaining < tx.amount:
                raise RejectedTransactionException("reward exceeds escrow")
            escrow.remaining -= tx.amount
            state.balances[tx.subject] = state.balances.get(tx.subject, 0) + tx.amount

    def _apply_store(self, state: LedgerState, tx: Transaction, height: int) -> None:
        key = tx.file_public_key
        if key is None:
            raise RejectedTransactionException("store carries no file public key")
        if tx.duration < 1 or tx.alpha < 1:
            raise RejectedTransactionException("duration and alpha must be positive")
        if tx.alpha % self.params.l != 0:
            raise RejectedTransactionException(f"alpha={tx.alpha} is not divisible by l={self.params.l}")
        if tx.amount != tx.duration * tx.alpha:
            raise RejectedTransactionException(
                f"funds {tx.amount} != duration * alpha = {tx.duration * tx.alpha}"
            )
        if key.n < self.params.m:
            raise RejectedTransactionException(f"file has n={key.n} < m={self.params.m} chunks")
        if any(escrow.file_public_key.file_id == key.file_id for escrow in state.escrows.values()):
            raise RejectedTransactionException("file already stored")
        if state.balances.get(tx.author, 0) < tx.amount:
            raise RejectedTransactionException("insufficient balance for escrow")

        state.balances[tx.author] -= tx.amount
        state.escrows[tx.tx_id] = Escrow(
            handle=tx.tx_id,
            payer=tx.author,
            file_public_key=key,
            duration=tx.duration,
            alpha=tx.alpha,
            remaining=tx.amount,
            activated_at=height + 1,
        )

    # timestamps

    def advance_timestamp(self, oracle: ElectionOracle) -> Tuple[IdentificationString, bytes]:
        """Open the next timestamp; calling again before acceptance retries it with a new seed"""
        idstr = make_idstr(self.block_creators, oracle.next_seed(), self.height)
        self._open_idstr = idstr
        return idstr, idstr.leader_public_key

    def expected_rewards(self, leader: bytes, proofs: Sequence[Proof]) -> List[Transaction]:
        rewards = []
        for escrow in self.active_escrows():
            payout = escrow.alpha // self.params.l
            for proof in proofs:
                if proof.file_id == escrow.file_public_key.file_id:
                    rewards.append(
                        Transaction(
                            kind=TransactionKind.REWARD,
                            author=leader,
                            nonce=self.height,
                            subject=proof.prover,
                            amount=payout,
                            source=escrow.handle,
                        )
                    )
        return rewards

    def create_block(
        self, leader: SigKeyPair, idstr: IdentificationString, proofs: Sequence[Proof]
    ) -> Block:
        rewards = tuple(
            tx.signed(sign(leader.secret_key, tx.body()))
            for tx in self.expected_rewards(leader.public_key, proofs)
        )
        block = Block(
            height=idstr.timestamp,
            previous_digest=self.tip_digest,
            leader_public_key=leader.public_key,
            idstr_digest=idstr.digest,
            transactions=tuple(self._pending) + rewards,
        )
        return create(leader, block)

    def _reject(self, block: Block, reason: str) -> bool:
        logger.debug("block_rejected", height=block.height, reason=reason)
        return False

    def accept_block(
        self, block: Block, idstr: IdentificationString, proofs: Sequence[Proof]
    ) -> bool:
        if self._open_idstr is None or idstr != self._open_idstr:
            return self._reject(block, "idstr is not the open timestamp")
        if block.height != self.height or block.previous_digest != self.tip_digest:
            return self._reject(block, "block does not extend the tip")

        file_keys = self.active_file_keys()
        if not self._verifier(
            file_keys, self.view(), idstr, block, proofs, self.params.d, self.params.k, self.params.l
        ):
            return self._reject(block, "extension verification failed")

        expected = sorted(tx.body() for tx in self.expected_rewards(block.leader_public_key, proofs))
        included = sorted(tx.body() for tx in block.transactions if tx.kind == TransactionKind.REWARD)
        if expected != included:
            return self._reject(block, "reward set does not match the winning proofs")

        paying = [escrow.handle for escrow in self.active_escrows()]
        state = self._state.copy()
        try:
            for tx in block.transactions:
                self._apply(state, tx, block.height)
        except RejectedTransactionException as e:
            return self._reject(block, e.detail)
        for handle in paying:
            state.escrows[handle].timestamps_paid += 1

        self._state = state
        self.blocks.append(block)
        included_ids = {tx.tx_id for tx in block.transactions}
        self._pending = [tx for tx in self._pending if tx.tx_id not in included_ids]
        self._pending_state = None
        self._open_idstr = None
        logger.debug("block_accepted", height=block.height, transactions=len(block.transactions))
        return True

    # replay

    def export_chain(self, path: Union[str, Path]) -> None:
        Path(path).write_text("".join(block.to_bytes().hex() + "\n" for block in self.blocks))


def import_chain(path: Union[str, Path], block_creators: Sequence[bytes]) -> List[Block]:
    """Load an exported chain, re-verifying heights, digest links and leader signatures"""
    creators = set(block_creators)
    blocks: List[Block] = []
    previous = ZERO_DIGEST
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        try:
            block = Block.from_bytes(bytes.fromhex(line.strip()))
        except ValueError as e:
            raise DecodeException(f"invalid block encoding: {e}") from e
        if block.height != len(blocks):
            raise DecodeException(f"expected height {len(blocks)}, got {block.height}")
        if block.previous_digest != previous:
            raise DecodeException(f"broken digest link at height {block.height}")
        if block.leader_public_key not in creators:
            raise DecodeException(f"unknown leader at height {block.height}")
        try:
            valid = sig_verify(block.leader_public_key, block.body(), block.signature)
        except BaseAuditaException:
            valid = False
        if not valid:
            raise DecodeException(f"bad leader signature at height {block.height}")
        blocks.append(block)
        previous = block.digest
    return blocks
