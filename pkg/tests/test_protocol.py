from dataclasses import replace

import pytest

from audita.core.crypto import sign
from audita.core.exceptions import DataLossException, ParameterException
from audita.models.ledger import ZERO_DIGEST, Block
from audita.models.pdp import AggregatedBlock, PdpProof
from audita.models.protocol import (
    ChainView,
    FilePublicKey,
    IdentificationString,
    PossessionProof,
)
from audita.services.pdp_service import derive_file_id
from audita.services.protocol_service import (
    assignment_indexes,
    challenge_seed,
    claim,
    create,
    derive_challenge_indexes,
    describe_file,
    elect,
    elect_leader,
    elected_storage_nodes,
    get_chunks,
    make_idstr,
    prove,
    prove_multi,
    sn_keygen,
    verify_claim,
    verify_claims,
    verify_extension,
    verify_leader,
    verify_multi,
    verify_possession,
)

from tests.conftest import TEST_CHUNK_SIZE, TEST_CHUNKS

M = 8
D = 3
K = 3
L = 2


def _block(keys, idstr, height=None):
    block = Block(
        height=idstr.timestamp if height is None else height,
        previous_digest=ZERO_DIGEST,
        leader_public_key=keys.public_key,
        idstr_digest=idstr.digest,
        transactions=(),
    )
    return block.signed(sign(keys.secret_key, block.body()))


@pytest.fixture(scope="module")
def transcript(encoded_file, storage_keys, creator_keys):
    """An honest one-timestamp exchange: k elected nodes, the first l of them prove"""
    key = encoded_file.file_public_key
    registry = tuple(keys.public_key for keys in storage_keys)
    creators = tuple(keys.public_key for keys in creator_keys)
    view = ChainView(storage_nodes=registry, block_creators=creators, m=M)
    idstr, elected = elect(registry, creators, b"oracle-seed", 1, K)
    leader = next(keys for keys in creator_keys if keys.public_key == idstr.leader_public_key)
    by_key = {keys.public_key: keys for keys in storage_keys}
    proofs = [
        prove(key, by_key[node], idstr, get_chunks(key, encoded_file, node, M), D) for node in elected[:L]
    ]
    outsider = next(keys for keys in storage_keys if keys.public_key not in elected)
    return {
        "key": key,
        "view": view,
        "idstr": idstr,
        "elected": elected,
        "leader": leader,
        "creator_keys": creator_keys,
        "block": _block(leader, idstr),
        "proofs": proofs,
        "by_key": by_key,
        "outsider": outsider,
    }


def test_setup_produces_tagged_chunks(encoded_file):
    key = encoded_file.file_public_key
    assert key.n == TEST_CHUNKS
    assert key.chunk_size == TEST_CHUNK_SIZE
    assert key.file_length == TEST_CHUNKS * TEST_CHUNK_SIZE - 5
    assert key.pdp is not None and key.pdp.file_id == key.file_id
    assert [chunk.tag.index for chunk in encoded_file.chunks] == list(range(TEST_CHUNKS))
    assert FilePublicKey.from_bytes(key.to_bytes()) == key


def test_describe_file_matches_setup_file_id(encoded_file):
    described = describe_file(TEST_CHUNKS, b"encoded-file-seed", TEST_CHUNK_SIZE)
    assert described.file_id == encoded_file.file_public_key.file_id == derive_file_id(b"encoded-file-seed")
    assert described.pdp is None


def test_assignment_is_deterministic_per_node(encoded_file, storage_keys):
    key = encoded_file.file_public_key
    a = get_chunks(key, encoded_file, storage_keys[0].public_key, M)
    b = get_chunks(key, encoded_file, storage_keys[0].public_key, M)
    c = get_chunks(key, encoded_file, storage_keys[1].public_key, M)
    assert a.indexes == b.indexes
    assert a.indexes != c.indexes
    assert a.m == M and len(a.index_set) == M
    assert set(a.held_chunks) == set(a.indexes)
    assert a.held_chunks[a.indexes[0]] == encoded_file.chunks[a.indexes[0]]


def test_assignment_rejects_m_out_of_range(encoded_file, storage_keys):
    with pytest.raises(ParameterException):
        assignment_indexes(encoded_file.file_public_key, storage_keys[0].public_key, TEST_CHUNKS + 1)


def test_leader_election_is_deterministic(creator_keys):
    creators = [keys.public_key for keys in creator_keys]
    assert elect_leader(creators, b"seed") == elect_leader(creators, b"seed")
    leaders = {elect_leader(creators, i.to_bytes(4, "big")) for i in range(200)}
    assert leaders == set(creators)
    with pytest.raises(ParameterException):
        elect_leader([], b"seed")


def test_elected_storage_nodes_are_distinct(storage_keys, creator_keys):
    registry = [keys.public_key for keys in storage_keys]
    idstr = make_idstr([keys.public_key for keys in creator_keys], b"seed", 1)
    elected = elected_storage_nodes(registry, idstr, 4)
    assert len(set(elected)) == 4
    assert set(elected) <= set(registry)
    with pytest.raises(ParameterException):
        elected_storage_nodes(registry, idstr, len(registry) + 1)


def test_election_frequency_is_uniform(uniform_chi_square):
    registry = [i.to_bytes(32, "big") for i in range(100)]
    counts = dict.fromkeys(registry, 0)
    for i in range(10_000):
        idstr = IdentificationString(leader_public_key=b"\x00" * 32, seed=i.to_bytes(8, "big"), timestamp=1)
        for node in elected_storage_nodes(registry, idstr, 10):
            counts[node] += 1
    statistic, critical = uniform_chi_square(counts.values())
    assert statistic < critical


def test_challenge_is_bound_to_node_and_timestamp(encoded_file, storage_keys, creator_keys):
    key = encoded_file.file_public_key
    creators = [keys.public_key for keys in creator_keys]
    node = storage_keys[0].public_key
    idstr = make_idstr(creators, b"seed", 1)
    later = make_idstr(creators, b"seed", 2)
    assert challenge_seed(key, node, idstr) != challenge_seed(key, node, later)
    assert challenge_seed(key, node, idstr) != challenge_seed(key, storage_keys[1].public_key, idstr)
    index_space = assignment_indexes(key, node, M)
    indexes = derive_challenge_indexes(key, node, idstr, D, index_space)
    assert len(set(indexes)) == D and set(indexes) <= set(index_space)
    with pytest.raises(ParameterException):
        derive_challenge_indexes(key, node, idstr, M + 1, index_space)


def test_honest_proof_verifies(transcript):
    for proof in transcript["proofs"]:
        assert verify_possession(transcript["key"], transcript["idstr"], proof, D, M)


def test_empty_challenge_proof_is_rejected(transcript):
    key, idstr = transcript["key"], transcript["idstr"]
    attacker = sn_keygen(b"holds-nothing")
    empty = PdpProof(blocks=tuple(AggregatedBlock(tag=1, data=0) for _ in range(key.pdp.blocks_per_chunk)))
    forged = PossessionProof(
        pdp_proof=empty,
        signature=sign(attacker.secret_key, empty.to_bytes(key.pdp.modulus_bytes)),
        prover=attacker.public_key,
        file_id=key.file_id,
    )
    assert not verify_possession(key, idstr, forged, 0, M)
    assert not verify_possession(key, idstr, forged, D, M)
    honest = transcript["proofs"][0]
    assert not verify_possession(key, idstr, honest, 0, M)
    assert not verify_possession(key, idstr, honest, M + 1, M)


def test_proof_encoding(transcript):
    proof = transcript["proofs"][0]
    width = transcript["key"].pdp.modulus_bytes
    assert PossessionProof.from_bytes(proof.to_bytes(width)) == proof


def test_prove_with_lost_challenged_chunk_raises(encoded_file, storage_keys, creator_keys):
    key = encoded_file.file_public_key
    keys = storage_keys[0]
    idstr = make_idstr([c.public_key for c in creator_keys], b"loss", 1)
    assignment = get_chunks(key, encoded_file, keys.public_key, M)
    challenged = derive_challenge_indexes(key, keys.public_key, idstr, D, assignment.indexes)
    del assignment.held_chunks[challenged[0]]
    with pytest.raises(DataLossException) as info:
        prove(key, keys, idstr, assignment, D)
    assert info.value.index == challenged[0]


def test_unchallenged_loss_goes_unnoticed(encoded_file, storage_keys, creator_keys):
    key = encoded_file.file_public_key
    keys = storage_keys[0]
    creators = [c.public_key for c in creator_keys]
    assignment = get_chunks(key, encoded_file, keys.public_key, M)
    deleted = assignment.indexes[0]
    del assignment.held_chunks[deleted]
    for t in range(1, 200):
        idstr = make_idstr(creators, b"lucky", t)
        if deleted not in derive_challenge_indexes(key, keys.public_key, idstr, D, assignment.indexes):
            break
    else:
        pytest.fail("every timestamp challenged the deleted chunk")
    proof = prove(key, keys, idstr, assignment, D)
    assert verify_possession(key, idstr, proof, D, M)


def test_prove_multi_covers_every_file(encoded_file, storage_keys, creator_keys):
    key = encoded_file.file_public_key
    keys = storage_keys[2]
    idstr = make_idstr([c.public_key for c in creator_keys], b"multi", 1)
    files = [(key, get_chunks(key, encoded_file, keys.public_key, M))]
    proofs = prove_multi(files, keys, idstr, D)
    assert len(proofs) == 1 and proofs[0].file_id == key.file_id


def test_create_requires_leader_key(transcript):
    other = next(k for k in transcript["creator_keys"] if k.public_key != transcript["leader"].public_key)
    unsigned = replace(transcript["block"], signature=b"")
    with pytest.raises(ParameterException):
        create(other, unsigned)
    assert create(transcript["leader"], unsigned) == transcript["block"]


def test_honest_extension_verifies(transcript):
    t = transcript
    assert verify_leader(t["view"], t["idstr"], t["block"])
    assert verify_multi([t["key"]], t["view"], t["idstr"], t["block"], t["proofs"], D, K, L)
    assert verify_extension(t["key"], t["view"], t["idstr"], t["block"], t["proofs"], D, K, L)


def _mutations(t):
    """Each entry breaks exactly one thing in the honest transcript"""
    key, idstr, proofs = t["key"], t["idstr"], t["proofs"]
    width = key.pdp.modulus_bytes

    impostor = next(k for k in t["creator_keys"] if k.public_key != idstr.leader_public_key)
    forged_idstr = IdentificationString(impostor.public_key, idstr.seed, idstr.timestamp)
    wrong_leader = (forged_idstr, _block(impostor, forged_idstr), proofs, D)

    other_idstr = IdentificationString(idstr.leader_public_key, b"another-seed", idstr.timestamp)
    wrong_idstr = (other_idstr, t["block"], proofs, D)

    outsider = t["outsider"]
    outsider_proof = prove(
        key, outsider, idstr, get_chunks(key, t["encoded"], outsider.public_key, M), D
    )
    non_elected = (idstr, t["block"], [proofs[0], outsider_proof], D)

    duplicate = (idstr, t["block"], [proofs[0], proofs[0]], D)

    signature = bytearray(proofs[1].signature)
    signature[0] ^= 1
    bad_signature = (idstr, t["block"], [proofs[0], replace(proofs[1], signature=bytes(signature))], D)

    block = proofs[1].pdp_proof.blocks[0]
    tampered = PdpProof(blocks=(AggregatedBlock(tag=block.tag, data=block.data + 1),))
    prover = t["by_key"][proofs[1].prover]
    resigned = replace(
        proofs[1], pdp_proof=tampered, signature=sign(prover.secret_key, tampered.to_bytes(width))
    )
    bad_pdp = (idstr, t["block"], [proofs[0], resigned], D)

    wrong_d = (idstr, t["block"], proofs, D + 1)

    return {
        "wrong_leader": wrong_leader,
        "wrong_idstr": wrong_idstr,
        "non_elected_prover": non_elected,
        "duplicate_prover": duplicate,
        "bad_signature": bad_signature,
        "bad_pdp_proof": bad_pdp,
        "wrong_d": wrong_d,
    }


@pytest.mark.parametrize(
    "mutation",
    ["wrong_leader", "wrong_idstr", "non_elected_prover", "duplicate_prover", "bad_signature",
     "bad_pdp_proof", "wrong_d"],
)
def test_single_fault_is_rejected(transcript, encoded_file, mutation):
    t = dict(transcript, encoded=encoded_file)
    idstr, block, proofs, d = _mutations(t)[mutation]
    assert not verify_multi([t["key"]], t["view"], idstr, block, proofs, d, K, L)


def test_wrong_proof_count_is_rejected(transcript):
    t = transcript
    assert not verify_multi([t["key"]], t["view"], t["idstr"], t["block"], t["proofs"][:1], D, K, L)
    assert not verify_multi([t["key"]], t["view"], t["idstr"], t["block"], [], D, K, L)


def test_block_for_other_height_is_rejected(transcript):
    t = transcript
    block = _block(t["leader"], t["idstr"], height=t["idstr"].timestamp + 1)
    assert not verify_leader(t["view"], t["idstr"], block)


def test_no_files_means_no_proofs(transcript):
    t = transcript
    assert verify_multi([], t["view"], t["idstr"], t["block"], [], D, K, L)
    assert not verify_multi([], t["view"], t["idstr"], t["block"], t["proofs"], D, K, L)


def test_claims_follow_the_same_rules(storage_keys, creator_keys):
    key = describe_file(64, b"claims", TEST_CHUNK_SIZE)
    registry = tuple(keys.public_key for keys in storage_keys)
    creators = tuple(keys.public_key for keys in creator_keys)
    view = ChainView(storage_nodes=registry, block_creators=creators, m=M)
    idstr, elected = elect(registry, creators, b"claims-seed", 1, K)
    leader = next(keys for keys in creator_keys if keys.public_key == idstr.leader_public_key)
    block = _block(leader, idstr)
    claims = [claim(key, node, idstr, get_chunks(key, None, node, M), D) for node in elected[:L]]
    assert all(verify_claim(key, idstr, item, D, M) for item in claims)
    assert not verify_claim(key, idstr, claims[0], 0, M)
    assert verify_claims([key], view, idstr, block, claims, D, K, L)

    lost = claim(key, elected[0], idstr, get_chunks(key, None, elected[0], M), D, lost=claims[0].challenged[:1])
    assert not lost.intact
    assert not verify_claims([key], view, idstr, block, [lost, claims[1]], D, K, L)

    shifted = replace(claims[0], challenged=tuple(reversed(claims[0].challenged)))
    assert not verify_claim(key, idstr, shifted, D, M)


def test_small_registry_elects_everyone(creator_keys, storage_keys):
    key = describe_file(64, b"small", TEST_CHUNK_SIZE)
    registry = tuple(keys.public_key for keys in storage_keys[:2])
    creators = tuple(keys.public_key for keys in creator_keys)
    view = ChainView(storage_nodes=registry, block_creators=creators, m=M)
    idstr = make_idstr(creators, b"small-seed", 1)
    leader = next(keys for keys in creator_keys if keys.public_key == idstr.leader_public_key)
    claims = [claim(key, node, idstr, get_chunks(key, None, node, M), D) for node in registry]
    # k=5 and l=3 shrink to the two registered nodes
    assert verify_claims([key], view, idstr, _block(leader, idstr), claims, D, 5, 3)
