from dataclasses import replace

import pytest

from audita.core.crypto import sign
from audita.core.exceptions import DecodeException, RejectedTransactionException
from audita.models.ledger import Block, ProtocolParams, Transaction, TransactionKind
from audita.services.ledger_service import ElectionOracle, Ledger, import_chain
from audita.services.protocol_service import (
    bc_keygen,
    claim,
    describe_file,
    elected_storage_nodes,
    get_chunks,
    sn_keygen,
    verify_claims,
)

FUNDS = 1000


@pytest.fixture
def actors():
    return {
        "creators": [bc_keygen(f"c{i}".encode()) for i in range(3)],
        "nodes": [sn_keygen(f"n{i}".encode()) for i in range(4)],
        "user": sn_keygen(b"user"),
        "dealer": bc_keygen(b"dealer"),
    }


def _ledger(actors, params=None):
    return Ledger(
        params or ProtocolParams(m=8, k=3, d=2, l=2),
        [keys.public_key for keys in actors["creators"]],
        allocations={actors["user"].public_key: FUNDS},
        verifier=verify_claims,
        dealer=actors["dealer"].public_key,
    )


def _creator(actors, public_key):
    return next(keys for keys in actors["creators"] if keys.public_key == public_key)


def _seal_empty(ledger, actors, oracle):
    idstr, leader = ledger.advance_timestamp(oracle)
    block = ledger.create_block(_creator(actors, leader), idstr, [])
    assert ledger.accept_block(block, idstr, [])
    return block


def _audit(ledger, actors, oracle, key):
    """Run one timestamp with the first l' elected nodes proving ``key`` while its escrow pays"""
    idstr, leader = ledger.advance_timestamp(oracle)
    k, l = ledger.params.committee(len(ledger.eligible))
    elected = elected_storage_nodes(ledger.eligible, idstr, k)
    files = [active for active in ledger.active_file_keys() if active == key]
    proofs = [
        claim(active, node, idstr, get_chunks(active, None, node, ledger.params.m), ledger.params.d)
        for node in elected[:l]
        for active in files
    ]
    block = ledger.create_block(_creator(actors, leader), idstr, proofs)
    return idstr, block, proofs


def _conserved(ledger):
    return sum(ledger.balances().values()) + ledger.escrow_total() == ledger.total_minted


@pytest.fixture
def stored(actors):
    """Ledger after the distribution block: four nodes joined, one file escrowed"""
    ledger = _ledger(actors)
    oracle = ElectionOracle(b"oracle")
    positions = [ledger.submit_join(keys) for keys in actors["nodes"]]
    key = describe_file(32, b"file")
    handle = ledger.submit_store(key, 5, 4, 20, actors["user"])
    _seal_empty(ledger, actors, oracle)
    return ledger, oracle, key, handle, positions


def test_distribution_block_applies_joins_and_store(stored, actors):
    ledger, _, key, handle, positions = stored
    assert positions == [0, 1, 2, 3]
    assert ledger.height == 1
    assert ledger.registry == tuple(keys.public_key for keys in actors["nodes"])
    assert ledger.balance(actors["user"].public_key) == FUNDS - 20
    assert ledger.escrow_remaining(handle) == 20
    assert ledger.active_file_keys() == [key]
    assert ledger.pending == ()
    assert _conserved(ledger)


def test_transactions_wait_for_a_block(actors):
    ledger = _ledger(actors)
    ledger.submit_join(actors["nodes"][0])
    assert ledger.registry == ()
    assert len(ledger.pending) == 1


def test_store_is_audited_from_the_next_block(actors):
    ledger = _ledger(actors)
    ledger.submit_join(actors["nodes"][0])
    ledger.submit_store(describe_file(32, b"file"), 5, 4, 20, actors["user"])
    assert ledger.active_file_keys() == []
    _seal_empty(ledger, actors, ElectionOracle(b"o"))
    assert len(ledger.active_file_keys()) == 1


def test_winning_proofs_are_paid(stored, actors):
    ledger, oracle, key, handle, _ = stored
    idstr, block, proofs = _audit(ledger, actors, oracle, key)
    assert ledger.accept_block(block, idstr, proofs)
    for proof in proofs:
        assert ledger.balance(proof.prover) == 2
    assert ledger.escrow_remaining(handle) == 16
    assert _conserved(ledger)


def test_lifetime_payout_equals_escrow(stored, actors):
    ledger, oracle, key, handle, _ = stored
    for _ in range(7):
        idstr, block, proofs = _audit(ledger, actors, oracle, key)
        assert ledger.accept_block(block, idstr, proofs)
        assert _conserved(ledger)
    node_total = sum(ledger.balance(keys.public_key) for keys in actors["nodes"])
    assert node_total == 20
    assert ledger.escrow_remaining(handle) == 0
    assert ledger.active_file_keys() == []


def test_block_with_wrong_proof_set_is_rejected(stored, actors):
    ledger, oracle, key, _, _ = stored
    idstr, block, proofs = _audit(ledger, actors, oracle, key)
    assert not ledger.accept_block(block, idstr, proofs[:1])
    assert ledger.height == 1
    assert ledger.accept_block(block, idstr, proofs)


def test_block_with_inflated_reward_is_rejected(stored, actors):
    ledger, oracle, key, _, _ = stored
    idstr, block, proofs = _audit(ledger, actors, oracle, key)
    leader = _creator(actors, block.leader_public_key)
    reward = block.transactions[-1]
    inflated = replace(reward, amount=reward.amount + 1)
    inflated = inflated.signed(sign(leader.secret_key, inflated.body()))
    forged = replace(block, transactions=block.transactions[:-1] + (inflated,))
    forged = forged.signed(sign(leader.secret_key, forged.body()))
    assert not ledger.accept_block(forged, idstr, proofs)


def test_block_must_extend_the_tip(stored, actors):
    ledger, oracle, key, _, _ = stored
    idstr, block, proofs = _audit(ledger, actors, oracle, key)
    leader = _creator(actors, block.leader_public_key)
    detached = replace(block, previous_digest=b"\x11" * 32)
    detached = detached.signed(sign(leader.secret_key, detached.body()))
    assert not ledger.accept_block(detached, idstr, proofs)


def test_block_requires_an_open_timestamp(stored, actors):
    ledger, oracle, key, _, _ = stored
    idstr, block, proofs = _audit(ledger, actors, oracle, key)
    assert ledger.accept_block(block, idstr, proofs)
    assert not ledger.accept_block(block, idstr, proofs)


def test_retried_timestamp_uses_a_fresh_seed(stored, actors):
    ledger, oracle, key, _, _ = stored
    first, _ = ledger.advance_timestamp(oracle)
    second, _ = ledger.advance_timestamp(oracle)
    assert first.timestamp == second.timestamp == ledger.height
    assert first.seed != second.seed


def test_small_registry_leaves_remainder_in_escrow(actors):
    ledger = _ledger(actors, ProtocolParams(m=8, k=3, d=2, l=3))
    oracle = ElectionOracle(b"oracle")
    for keys in actors["nodes"][:2]:
        ledger.submit_join(keys)
    key = describe_file(32, b"file")
    handle = ledger.submit_store(key, 2, 3, 6, actors["user"])
    _seal_empty(ledger, actors, oracle)

    idstr, block, proofs = _audit(ledger, actors, oracle, key)
    assert len(proofs) == 2
    assert ledger.accept_block(block, idstr, proofs)
    assert ledger.escrow_remaining(handle) == 4
    assert _conserved(ledger)


@pytest.mark.parametrize(
    "duration,alpha,funds",
    [(5, 3, 15), (5, 4, 21), (0, 4, 0), (5, 0, 0), (2000, 2, 4000)],
)
def test_invalid_store_is_rejected(actors, duration, alpha, funds):
    ledger = _ledger(actors)
    with pytest.raises(RejectedTransactionException):
        ledger.submit_store(describe_file(32, b"file"), duration, alpha, funds, actors["user"])
    assert ledger.pending == ()


def test_store_needs_enough_chunks(actors):
    ledger = _ledger(actors)
    with pytest.raises(RejectedTransactionException):
        ledger.submit_store(describe_file(4, b"tiny"), 1, 2, 2, actors["user"])


def test_file_is_stored_once(actors):
    ledger = _ledger(actors)
    key = describe_file(32, b"file")
    ledger.submit_store(key, 1, 2, 2, actors["user"])
    with pytest.raises(RejectedTransactionException):
        ledger.submit_store(key, 1, 2, 2, actors["user"])


def test_duplicate_join_is_rejected(actors):
    ledger = _ledger(actors)
    ledger.submit_join(actors["nodes"][0])
    with pytest.raises(RejectedTransactionException):
        ledger.submit_join(actors["nodes"][0])


def test_only_the_dealer_marks_faults(stored, actors):
    ledger, oracle, _, _, _ = stored
    node = actors["nodes"][1].public_key
    with pytest.raises(RejectedTransactionException):
        ledger.submit_fault(node, actors["creators"][0])
    with pytest.raises(RejectedTransactionException):
        ledger.submit_fault(b"\x01" * 32, actors["dealer"])
    ledger.submit_fault(node, actors["dealer"])
    with pytest.raises(RejectedTransactionException):
        ledger.submit_fault(node, actors["dealer"])


def test_faulty_node_leaves_the_election(actors):
    ledger = _ledger(actors)
    oracle = ElectionOracle(b"oracle")
    for keys in actors["nodes"]:
        ledger.submit_join(keys)
    _seal_empty(ledger, actors, oracle)
    node = actors["nodes"][1].public_key
    ledger.submit_fault(node, actors["dealer"])
    assert node in ledger.eligible
    _seal_empty(ledger, actors, oracle)
    assert ledger.faulty == (node,)
    assert node not in ledger.eligible
    assert node in ledger.registry


def test_unsigned_transaction_is_rejected(actors):
    ledger = _ledger(actors)
    tx = Transaction(kind=TransactionKind.JOIN, author=actors["nodes"][0].public_key, nonce=0,
                     subject=actors["nodes"][0].public_key)
    with pytest.raises(RejectedTransactionException):
        ledger._apply(ledger._state.copy(), tx, 0)


def test_oracle_seeds_are_reproducible():
    a, b = ElectionOracle(b"seed"), ElectionOracle(b"seed")
    seeds = [a.next_seed() for _ in range(5)]
    assert seeds == [b.next_seed() for _ in range(5)]
    assert len(set(seeds)) == 5


def test_block_encoding(stored, actors):
    ledger, oracle, key, _, _ = stored
    idstr, block, proofs = _audit(ledger, actors, oracle, key)
    assert Block.from_bytes(block.to_bytes()) == block


def test_chain_export_and_import(stored, actors, tmp_path):
    ledger, oracle, key, _, _ = stored
    for _ in range(3):
        idstr, block, proofs = _audit(ledger, actors, oracle, key)
        assert ledger.accept_block(block, idstr, proofs)
    path = tmp_path / "chain.log"
    ledger.export_chain(path)
    creators = [keys.public_key for keys in actors["creators"]]
    assert import_chain(path, creators) == ledger.blocks

    lines = path.read_text().splitlines()
    lines[1], lines[2] = lines[2], lines[1]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DecodeException):
        import_chain(path, creators)


def test_import_rejects_foreign_leader(stored, actors, tmp_path):
    ledger, _, _, _, _ = stored
    path = tmp_path / "chain.log"
    ledger.export_chain(path)
    with pytest.raises(DecodeException):
        import_chain(path, [bc_keygen(b"stranger").public_key])
