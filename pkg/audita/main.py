"""Command-line front end.

Every subcommand is non-interactive. Contract violations exit 1 with a single
``error code=<code> detail=<json>`` line on stderr; argparse usage errors exit 2.
"""
import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from audita.config import settings
from audita.core.exceptions import (
    BaseAuditaException,
    DecodeException,
    ParameterException,
    VerificationFailedException,
)
from audita.core.logging import get_logger, setup_logging
from audita.models.manifests import (
    AssignmentManifest,
    ChallengeManifest,
    ChunkStoreManifest,
    FileKeyManifest,
    KeyManifest,
    ProofManifest,
    read_manifest,
    write_manifest,
)
from audita.models.protocol import FilePublicKey, NodeIdentity, NodeRole
from audita.services.coverage_service import CoverageService
from audita.services.protocol_service import (
    bc_keygen,
    derive_challenge,
    get_chunks,
    make_idstr,
    prove,
    setup,
    sn_keygen,
    verify_possession,
)
from audita.services.simulation_service import run_simulation
from audita.utils.scenario import load_scenario, summary_table, write_outputs

logger = get_logger(__name__)

ROLES = {"storage-node": NodeRole.STORAGE_NODE, "block-creator": NodeRole.BLOCK_CREATOR}
OVERRIDABLE = ("n", "m", "k", "d", "l")


def _seed(value: str) -> bytes:
    try:
        seed = bytes.fromhex(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be hex, got {value!r}")
    if not seed:
        raise argparse.ArgumentTypeError("seed must not be empty")
    return seed


def _positive(value: str) -> int:
    number = int(value)
    if number <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return number


def cmd_keygen(args: argparse.Namespace) -> int:
    role = ROLES[args.role]
    keys = sn_keygen(args.seed) if role == NodeRole.STORAGE_NODE else bc_keygen(args.seed)
    write_manifest(args.out, KeyManifest.build(NodeIdentity(role=role, keys=keys)))
    print(keys.public_key.hex())
    return 0


def cmd_setup(args: argparse.Namespace) -> int:
    try:
        data = Path(args.file).read_bytes()
    except OSError as e:
        raise ParameterException(f"cannot read {args.file}: {e}") from e
    encoded = setup(data, args.chunk_size, args.modulus_bits, args.seed)
    out = Path(args.out)
    key = encoded.file_public_key
    write_manifest(out / "file_key.json", FileKeyManifest(file_public_key=key.to_bytes().hex()))
    write_manifest(out / "store.json", ChunkStoreManifest.build(encoded))
    print(f"file_id={key.file_id.hex()} n={key.n}")
    return 0


def cmd_distribute(args: argparse.Namespace) -> int:
    encoded = read_manifest(args.store, ChunkStoreManifest).encoded_file()
    key = encoded.file_public_key
    width = key.pdp.modulus_bytes if key.pdp is not None else 0
    out = Path(args.out)
    for path in args.node_key:
        node = read_manifest(path, KeyManifest).identity()
        if node.role != NodeRole.STORAGE_NODE:
            raise ParameterException(f"{path} is not a storage-node key")
        assignment = get_chunks(key, encoded, node.public_key, args.m)
        target = out / f"assignment_{node.public_key.hex()[:16]}.json"
        write_manifest(target, AssignmentManifest.build(assignment, width))
        print(target)
    return 0


def _load_file_key(path: str) -> FilePublicKey:
    return read_manifest(path, FileKeyManifest).key()


def cmd_challenge(args: argparse.Namespace) -> int:
    key = _load_file_key(args.file_key)
    creators = [read_manifest(path, KeyManifest).public_key for path in args.block_creator]
    node = read_manifest(args.node_key, KeyManifest).public_key
    assignment = read_manifest(args.assignment, AssignmentManifest).assignment()
    if assignment.storage_node != node:
        raise ParameterException("assignment belongs to a different storage-node")
    idstr = make_idstr(creators, args.seed, args.timestamp)
    chal = derive_challenge(key, node, idstr, args.d, assignment.indexes)
    manifest = ChallengeManifest(
        idstr=idstr.to_bytes().hex(),
        storage_node=node.hex(),
        d=args.d,
        m=assignment.m,
        challenge=chal.to_bytes().hex(),
        indexes=list(chal.indexes),
    )
    write_manifest(args.out, manifest)
    print(" ".join(str(i) for i in chal.indexes))
    return 0


def cmd_prove(args: argparse.Namespace) -> int:
    key = _load_file_key(args.file_key)
    if key.pdp is None:
        raise ParameterException("file key carries no PDP material")
    keys = read_manifest(args.node_key, KeyManifest).keys()
    assignment = read_manifest(args.assignment, AssignmentManifest).assignment()
    chal = read_manifest(args.challenge, ChallengeManifest)
    idstr = chal.identification()
    expected = derive_challenge(key, keys.public_key, idstr, chal.d, assignment.indexes)
    if expected.to_bytes().hex() != chal.challenge:
        raise DecodeException("challenge does not match this node, assignment and timestamp")
    proof = prove(key, keys, idstr, assignment, chal.d)
    manifest = ProofManifest(
        idstr=chal.idstr, d=chal.d, m=chal.m, proof=proof.to_bytes(key.pdp.modulus_bytes).hex()
    )
    write_manifest(args.out, manifest)
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    key = _load_file_key(args.file_key)
    manifest = read_manifest(args.proof, ProofManifest)
    # the audit parameters are public; the prover's manifest only restates them
    if (manifest.d, manifest.m) != (args.d, args.m):
        raise VerificationFailedException(
            f"proof answers d={manifest.d} m={manifest.m}, audit uses d={args.d} m={args.m}"
        )
    proof = manifest.possession_proof()
    if not verify_possession(key, manifest.identification(), proof, args.d, args.m):
        raise VerificationFailedException(f"proof by {proof.prover.hex()} rejected")
    print("valid")
    return 0


def _load_config(args: argparse.Namespace):
    config = load_scenario(args.scenario)
    updates = {name: getattr(args, name) for name in OVERRIDABLE if getattr(args, name) is not None}
    if args.seed is not None:
        updates["master_seed"] = args.seed
    if updates:
        try:
            config = type(config)(**{**config.model_dump(), **updates})
        except ValueError as e:
            raise ParameterException(f"invalid override: {e}") from e
    return config


def cmd_simulate(args: argparse.Namespace) -> int:
    result = run_simulation(_load_config(args))
    write_outputs(result, args.out)
    print(summary_table(result))
    return 0


def cmd_export_chain(args: argparse.Namespace) -> int:
    result = run_simulation(_load_config(args))
    result.ledger.export_chain(args.out)
    print(f"blocks={result.ledger.height}")
    return 0


def cmd_solve(args: argparse.Namespace) -> int:
    coverage = CoverageService(args.n, args.d, args.l)
    timestamps = coverage.timestamps_for(args.target)
    print(timestamps)
    logger.info("solved", timestamps=timestamps, coverage=coverage.coverage(timestamps))
    return 0


def _add_scenario_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--scenario", required=True, help="Scenario file (key = value)")
    parser.add_argument("--seed", type=_seed, help="Override the master seed (hex)")
    for name in OVERRIDABLE:
        parser.add_argument(f"--{name}", type=int, help=f"Override {name}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="audita", description="Blockchain storage audit protocol toolkit")
    parser.add_argument("--log-level", default=None, help="Override LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="Generate a storage-node or block-creator key")
    p.add_argument("--role", choices=sorted(ROLES), default="storage-node")
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_keygen)

    p = sub.add_parser("setup", help="Chunk and tag a file")
    p.add_argument("--file", required=True)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--chunk-size", type=_positive, default=settings.CHUNK_SIZE)
    p.add_argument("--modulus-bits", type=int, default=settings.PDP_MODULUS_BITS)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_setup)

    p = sub.add_parser("distribute", help="Write per-node assignment manifests")
    p.add_argument("--store", required=True)
    p.add_argument("--node-key", action="append", required=True)
    p.add_argument("--m", type=_positive, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_distribute)

    p = sub.add_parser("challenge", help="Derive a node's challenge for one timestamp")
    p.add_argument("--file-key", required=True)
    p.add_argument("--node-key", required=True)
    p.add_argument("--assignment", required=True)
    p.add_argument("--block-creator", action="append", required=True)
    p.add_argument("--seed", type=_seed, required=True, help="Oracle seed of the timestamp (hex)")
    p.add_argument("--timestamp", type=int, default=1)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_challenge)

    p = sub.add_parser("prove", help="Answer a challenge with a signed possession proof")
    p.add_argument("--file-key", required=True)
    p.add_argument("--node-key", required=True)
    p.add_argument("--assignment", required=True)
    p.add_argument("--challenge", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_prove)

    p = sub.add_parser("verify", help="Verify a possession proof")
    p.add_argument("--file-key", required=True)
    p.add_argument("--proof", required=True)
    p.add_argument("--d", type=_positive, required=True)
    p.add_argument("--m", type=_positive, required=True)
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("simulate", help="Run a scenario and write CSV outputs")
    _add_scenario_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("solve", help="Timestamps needed to reach a coverage target")
    p.add_argument("--n", type=_positive, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--l", type=_positive, required=True)
    p.add_argument("--target", type=float, default=0.9)
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("export-chain", help="Run a scenario and export its chain")
    _add_scenario_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_export_chain)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    try:
        return args.handler(args)
    except BaseAuditaException as e:
        logger.debug("command_failed", command=args.command, code=e.code)
        print(f"error code={e.code} detail={json.dumps(e.detail)}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
