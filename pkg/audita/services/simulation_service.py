"""Deterministic discrete-event simulation of the audit protocol.

Each timestamp the oracle elects a leader and k storage-nodes; the elected
nodes race to deliver possession proofs and the leader rewards the first l
valid ones. Everything random derives from the configured master seed.
"""
import asyncio
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence, Set, Tuple, Union

import numpy as np

from audita.core.crypto import HashDomain, HashDrbg, hash, sample_without_replacement, sign
from audita.core.exceptions import DataLossException, InternalException, UnrecoverableChunkException
from audita.core.logging import get_logger
from audita.models.ledger import ProtocolParams
from audita.models.pdp import ChunkTag
from audita.models.protocol import (
    ChunkAssignment,
    FilePublicKey,
    IdentificationString,
    NodeIdentity,
    NodeRole,
    PossessionProof,
    ProofClaim,
)
from audita.models.simulation import (
    AdversaryKind,
    AdversaryStats,
    CoverageState,
    FailedJoin,
    RaceOutcome,
    Response,
    SimConfig,
    SimulationMode,
    StorageNode,
)
from audita.services.dealer_service import Dealer
from audita.services.ledger_service import ElectionOracle, Ledger
from audita.services.pdp_service import pdp_genproof
from audita.services.protocol_service import (
    assignment_indexes,
    bc_keygen,
    claim,
    derive_challenge,
    derive_challenge_indexes,
    describe_file,
    elected_storage_nodes,
    prove,
    setup,
    sn_keygen,
    verify_claim,
    verify_claims,
    verify_multi,
    verify_possession,
)

logger = get_logger(__name__)

Proof = Union[PossessionProof, ProofClaim]


def _rng_seed(master_seed: bytes, label: bytes) -> int:
    return int.from_bytes(hash(HashDomain.LATENCY, master_seed + label)[:8], "big")


@dataclass
class SimulationResult:
    config: SimConfig
    coverage: List[CoverageState]
    ledger: Ledger
    nodes: List[StorageNode]
    outcomes: List[RaceOutcome] = field(default_factory=list)
    failed_joins: List[FailedJoin] = field(default_factory=list)

    def reward_tally(self) -> Dict[int, int]:
        return {node.node_id: self.ledger.balance(node.public_key) for node in self.nodes}

    def failure_tally(self) -> Dict[int, int]:
        failures = {node.node_id: 0 for node in self.nodes}
        for outcome in self.outcomes:
            for response in outcome.rejected:
                failures[response.node_id] += 1
        return failures

    def adversary_report(self) -> List[AdversaryStats]:
        return adversary_report(self.outcomes, self.nodes, self.ledger)


class NetworkSimulator:
    def __init__(self, config: SimConfig):
        self.config = config
        seed = config.master_seed
        self.full_crypto = config.mode == SimulationMode.FULL_CRYPTO
        self.params = ProtocolParams(m=config.m, k=config.k, d=config.d, l=config.l)
        self.oracle = ElectionOracle(seed)

        self.creators = [
            NodeIdentity(NodeRole.BLOCK_CREATOR, bc_keygen(seed + i.to_bytes(4, "big")), registry_position=i)
            for i in range(config.block_creators)
        ]
        self._creators = {creator.public_key: creator.keys for creator in self.creators}
        self.dealer_identity = NodeIdentity(NodeRole.DEALER, bc_keygen(seed + b"dealer"))
        self.user_keys = sn_keygen(seed + b"user")

        bases = np.random.default_rng(_rng_seed(seed, b"base")).uniform(
            config.latency_base_min_ms, config.latency_base_max_ms, size=config.total_nodes
        )
        self.nodes = [
            StorageNode(
                node_id=i,
                keys=sn_keygen(seed + i.to_bytes(4, "big")),
                base_latency_ms=float(bases[i]),
                adversary=config.adversary(i),
            )
            for i in range(config.total_nodes)
        ]
        self._by_key = {node.public_key: node for node in self.nodes}

        self.files, encoded = self._prepare_files()
        self.dealer = Dealer(self.files, config.m, encoded)
        self.coverage = [CoverageState(file_id=key.file_id, n=key.n) for key in self.files]
        self._coverage_by_file = {state.file_id: state for state in self.coverage}
        self._keys_by_file = {key.file_id: key for key in self.files}

        funds = config.duration * config.payout
        self.ledger = Ledger(
            self.params,
            [creator.public_key for creator in self.creators],
            allocations={self.user_keys.public_key: funds * config.file_count},
            verifier=verify_multi if self.full_crypto else verify_claims,
            dealer=self.dealer_identity.public_key,
        )
        self.outcomes: List[RaceOutcome] = []
        self.failed_joins: List[FailedJoin] = []
        self._faulted: Set[bytes] = set()

    def _prepare_files(self):
        config = self.config
        files: List[FilePublicKey] = []
        encoded = {}
        for f in range(config.file_count):
            file_seed = config.master_seed + b"file" + f.to_bytes(4, "big")
            if self.full_crypto:
                data = HashDrbg(file_seed).randbytes(config.n * config.chunk_size)
                encoded_file = setup(data, config.chunk_size, config.modulus_bits, file_seed)
                files.append(encoded_file.file_public_key)
                encoded[encoded_file.file_public_key.file_id] = encoded_file
            else:
                files.append(describe_file(config.n, file_seed, config.chunk_size))
        return files, encoded

    # node behaviour

    def _apply_deletion(self, node: StorageNode) -> None:
        if node.kind != AdversaryKind.DELETER:
            return
        count = round(node.adversary.value * self.config.m)
        for file_id, assignment in node.assignments.items():
            positions = sample_without_replacement(
                HashDomain.DELETION,
                self.config.master_seed + node.public_key + file_id,
                assignment.m,
                count,
            )
            lost = {assignment.indexes[p] for p in positions}
            node.lost[file_id] = lost
            for index in lost:
                assignment.held_chunks.pop(index, None)

    def _forge(self, key: FilePublicKey, node: StorageNode, idstr: IdentificationString,
               assignment: ChunkAssignment) -> PossessionProof:
        public = key.pdp
        chal = derive_challenge(key, node.public_key, idstr, self.config.d, assignment.indexes)
        drbg = HashDrbg(idstr.to_bytes() + node.public_key + key.file_id)
        chunks, tags = {}, {}
        for index in chal.indexes:
            held = assignment.held_chunks.get(index)
            if held is not None:
                chunks[index], tags[index] = held.data, held.tag
            else:
                chunks[index] = drbg.randbytes(key.chunk_size)
                tags[index] = ChunkTag(
                    index=index,
                    values=tuple(drbg.randbelow(public.modulus) for _ in range(public.blocks_per_chunk)),
                )
        pdp_proof = pdp_genproof(public, chal, chunks, tags)
        return PossessionProof(
            pdp_proof=pdp_proof,
            signature=sign(node.keys.secret_key, pdp_proof.to_bytes(public.modulus_bytes)),
            prover=node.public_key,
            file_id=key.file_id,
        )

    def _respond(self, node: StorageNode, files: Sequence[FilePublicKey],
                 idstr: IdentificationString) -> Tuple[List[Proof], str]:
        """A node's answer: one proof per file, or a refusal reason"""
        d = self.config.d
        evidence: List[Proof] = []
        for key in files:
            assignment = node.assignments[key.file_id]
            if self.full_crypto:
                try:
                    evidence.append(prove(key, node.keys, idstr, assignment, d))
                except DataLossException as e:
                    if not self.config.forge_on_delete:
                        return [], f"refused: chunk {e.index} lost"
                    evidence.append(self._forge(key, node, idstr, assignment))
            else:
                item = claim(key, node.public_key, idstr, assignment, d, node.lost.get(key.file_id, ()))
                if not item.intact and not self.config.forge_on_delete:
                    return [], "refused: challenged chunk lost"
                evidence.append(item)
        return evidence, ""

    def _check(self, files: Sequence[FilePublicKey], idstr: IdentificationString,
               evidence: Sequence[Proof]) -> bool:
        check: Callable = verify_possession if self.full_crypto else verify_claim
        return all(
            check(key, idstr, item, self.config.d, self.config.m) for key, item in zip(files, evidence)
        )

    def _arrivals(self, elected: Sequence[StorageNode]) -> List[Tuple[float, StorageNode]]:
        config = self.config
        rng = np.random.default_rng(
            _rng_seed(config.master_seed, b"jitter" + self.oracle.epoch.to_bytes(8, "big"))
        )
        jitter = rng.lognormal(config.jitter_mu, config.jitter_sigma, size=len(self.nodes))
        arrivals = [
            (node.base_latency_ms + float(jitter[node.node_id]) + node.penalty_ms, node) for node in elected
        ]
        # equal arrival times break ties on the public key
        arrivals.sort(key=lambda item: (item[0], item[1].public_key))
        return arrivals

    # timestamps

    def _distribute(self) -> None:
        """Beat 0: joins, store transactions and the initial chunk distribution; no audit"""
        config = self.config
        initial = [node for node in self.nodes if node.node_id < config.node_count]
        initial += [self.nodes[config.node_count + i] for i, t in enumerate(config.late_joins) if t == 0]
        for node in initial:
            self.ledger.submit_join(node.keys)
            self.dealer.distribute(node)
            self._apply_deletion(node)
        for key in self.files:
            self.ledger.submit_store(key, config.duration, config.payout, config.duration * config.payout,
                                     self.user_keys)
        self.dealer.release_files()

        idstr, leader = self.ledger.advance_timestamp(self.oracle)
        block = self.ledger.create_block(self._creators[leader], idstr, [])
        if not self.ledger.accept_block(block, idstr, []):
            raise InternalException("distribution block rejected")
        logger.info("distribution_complete", nodes=len(initial), files=len(self.files))

    def _mark_faulty(self, public_keys: Sequence[bytes]) -> None:
        for public_key in public_keys:
            if public_key in self._faulted:
                continue
            self._faulted.add(public_key)
            self.ledger.submit_fault(public_key, self.dealer_identity.keys)

    def _late_joins(self, timestamp: int) -> None:
        """Serve each joiner from current holders; it only joins once every chunk arrived"""
        config = self.config
        for i, t in enumerate(config.late_joins):
            if t != timestamp or t == 0:
                continue
            node = self.nodes[config.node_count + i]
            holders = [self._by_key[key] for key in self.ledger.eligible if key not in self._faulted]
            try:
                report = self.dealer.late_join(node, holders)
            except UnrecoverableChunkException as e:
                self._mark_faulty(e.refusers)
                self.failed_joins.append(
                    FailedJoin(
                        timestamp=timestamp,
                        node_id=node.node_id,
                        missing=e.indexes,
                        refusers=tuple(self._by_key[key].node_id for key in e.refusers),
                    )
                )
                logger.warning("late_join_abandoned", node_id=node.node_id, missing=len(e.indexes))
                continue
            self.ledger.submit_join(node.keys)
            self._apply_deletion(node)
            self._mark_faulty([refuser.public_key for refuser in report.refusers])

    async def _collect(self, elected: Sequence[StorageNode], files: Sequence[FilePublicKey],
                       idstr: IdentificationString) -> Dict[int, Tuple[List[Proof], str]]:
        answers = await asyncio.gather(
            *(asyncio.to_thread(self._respond, node, files, idstr) for node in elected)
        )
        return {node.node_id: answer for node, answer in zip(elected, answers)}

    async def _run_timestamp(self, timestamp: int) -> RaceOutcome:
        config = self.config
        for attempt in range(config.max_retries + 1):
            idstr, leader = self.ledger.advance_timestamp(self.oracle)
            view = self.ledger.view()
            files = self.ledger.active_file_keys()
            k_eff, l_eff = self.params.committee(len(view.storage_nodes))
            elected = [self._by_key[key] for key in elected_storage_nodes(view.storage_nodes, idstr, k_eff)]
            arrivals = self._arrivals(elected)

            answers = await self._collect(elected, files, idstr) if self.full_crypto else {}
            responses: List[Response] = []
            winners: List[StorageNode] = []
            proofs: List[Proof] = []
            for arrival, node in arrivals:
                if len(winners) >= l_eff and not config.evaluate_all_responses:
                    break
                if node.node_id not in answers:
                    answers[node.node_id] = self._respond(node, files, idstr)
                evidence, reason = answers[node.node_id]
                valid = not reason and self._check(files, idstr, evidence)
                if not valid and not reason:
                    reason = "invalid proof"
                responses.append(Response(node.node_id, node.public_key, arrival, valid, reason))
                if valid and len(winners) < l_eff:
                    winners.append(node)
                    proofs.extend(evidence)

            outcome = RaceOutcome(
                timestamp=timestamp,
                attempt=attempt,
                leader=leader,
                elected=tuple(node.node_id for node in elected),
                responders=responses,
                winners=tuple(node.node_id for node in winners),
                accepted=False,
            )
            self.outcomes.append(outcome)
            if len(winners) < l_eff:
                logger.warning("timestamp_retry", timestamp=timestamp, attempt=attempt, valid=len(winners))
                continue

            block = self.ledger.create_block(self._creators[leader], idstr, proofs)
            if not self.ledger.accept_block(block, idstr, proofs):
                raise InternalException(f"honest block rejected at timestamp {timestamp}")
            outcome.accepted = True
            self._mark(files, idstr, proofs)
            return outcome
        raise InternalException(f"no quorum of valid proofs at timestamp {timestamp}")

    def _mark(self, files: Sequence[FilePublicKey], idstr: IdentificationString, proofs: Sequence[Proof]) -> None:
        """Credit coverage only for proofs in the accepted block"""
        for proof in proofs:
            if isinstance(proof, ProofClaim):
                challenged = proof.challenged
            else:
                key = self._keys_by_file[proof.file_id]
                challenged = derive_challenge_indexes(
                    key, proof.prover, idstr, self.config.d, assignment_indexes(key, proof.prover, self.config.m)
                )
            self._coverage_by_file[proof.file_id].mark(challenged)

    async def run_async(self) -> SimulationResult:
        config = self.config
        logger.info("simulation_started", mode=config.mode.value, n=config.n, m=config.m, k=config.k,
                    d=config.d, l=config.l, nodes=config.node_count, files=config.file_count)
        self._distribute()
        for timestamp in range(1, config.max_timestamps + 1):
            self._late_joins(timestamp)
            await self._run_timestamp(timestamp)
            for state in self.coverage:
                state.close_timestamp()

        logger.info(
            "simulation_finished",
            timestamps=config.max_timestamps,
            coverage=[round(state.history[-1], 6) if state.history else 0.0 for state in self.coverage],
            retries=sum(1 for outcome in self.outcomes if not outcome.accepted),
        )
        return SimulationResult(
            config=config,
            coverage=self.coverage,
            ledger=self.ledger,
            nodes=self.nodes,
            outcomes=self.outcomes,
            failed_joins=self.failed_joins,
        )


def run_simulation(config: SimConfig) -> SimulationResult:
    return asyncio.run(NetworkSimulator(config).run_async())


def adversary_report(
    outcomes: Sequence[RaceOutcome], nodes: Sequence[StorageNode], ledger: Ledger
) -> List[AdversaryStats]:
    stats = {
        node.node_id: AdversaryStats(node_id=node.node_id, kind=node.kind, value=node.adversary.value)
        for node in nodes
        if node.adversary is not None
    }
    for outcome in outcomes:
        for node_id in outcome.elected:
            if node_id in stats:
                stats[node_id].elected += 1
        for response in outcome.responders:
            if response.node_id in stats:
                stats[response.node_id].evaluated += 1
                stats[response.node_id].failures += 0 if response.valid else 1
        if outcome.accepted:
            for node_id in outcome.winners:
                if node_id in stats:
                    stats[node_id].wins += 1

    paid = sum(ledger.balance(node.public_key) for node in nodes)
    faulty = set(ledger.faulty)
    by_id = {node.node_id: node for node in nodes}
    for node_id, entry in stats.items():
        node = by_id[node_id]
        entry.rewards = ledger.balance(node.public_key)
        entry.reward_share = entry.rewards / paid if paid else 0.0
        entry.faulty = node.public_key in faulty
    return [stats[node_id] for node_id in sorted(stats)]


def outsourcer_share(report: Sequence[AdversaryStats]) -> float:
    return sum(entry.reward_share for entry in report if entry.kind == AdversaryKind.OUTSOURCER)


def matched_penalty_configs(config: SimConfig, penalties: Sequence[float]) -> List[SimConfig]:
    """Copies of ``config`` differing only in the outsourcing penalty"""
    copies = []
    for penalty in penalties:
        adversaries = [
            spec.model_copy(update={"value": penalty}) if spec.kind == AdversaryKind.OUTSOURCER else spec
            for spec in config.adversaries
        ]
        copies.append(config.model_copy(update={"adversaries": adversaries}))
    return copies


def honest_median_latency(config: SimConfig) -> float:
    base = (config.latency_base_min_ms + config.latency_base_max_ms) / 2
    return base + float(np.exp(config.jitter_mu))


def summarize(result: SimulationResult) -> Dict[str, float]:
    config = result.config
    return {
        "timestamps": config.max_timestamps,
        "blocks": result.ledger.height,
        "retries": sum(1 for outcome in result.outcomes if not outcome.accepted),
        "final_coverage": min((state.history[-1] for state in result.coverage if state.history), default=0.0),
        "rewards_paid": sum(result.reward_tally().values()),
        "escrow_left": result.ledger.escrow_total(),
        "failed_joins": len(result.failed_joins),
    }
