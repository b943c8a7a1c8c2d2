"""Scenario files in, CSV and chain files out.

A scenario is flat ``key = value`` text; ``#`` starts a comment. List fields use
commas: ``adversaries = 3:outsourcer:500,7:deleter:0.01`` and ``late_joins = 5,10``.
"""
from pathlib import Path
from typing import Any, Dict, List, Union

import pandas as pd
from pydantic import ValidationError

from audita.core.exceptions import ParameterException
from audita.core.logging import get_logger
from audita.models.simulation import SimConfig
from audita.services.simulation_service import SimulationResult, summarize

logger = get_logger(__name__)

FLOAT_FORMAT = "%.6f"


def _parse_adversaries(value: str) -> List[Dict[str, Any]]:
    specs = []
    for item in filter(None, (part.strip() for part in value.split(","))):
        parts = item.split(":")
        if len(parts) not in (2, 3):
            raise ParameterException(f"adversary entry '{item}' is not node:kind[:value]")
        spec: Dict[str, Any] = {"node_id": parts[0], "kind": parts[1]}
        if len(parts) == 3:
            spec["value"] = parts[2]
        specs.append(spec)
    return specs


def parse_scenario(text: str) -> SimConfig:
    raw: Dict[str, Any] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterException(f"line {number}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in raw:
            raise ParameterException(f"line {number}: duplicate key '{key}'")
        raw[key] = value

    if "adversaries" in raw:
        raw["adversaries"] = _parse_adversaries(raw["adversaries"])
    if "late_joins" in raw:
        raw["late_joins"] = [part.strip() for part in raw["late_joins"].split(",") if part.strip()]

    unknown = set(raw) - set(SimConfig.model_fields)
    if unknown:
        raise ParameterException(f"unknown scenario keys: {sorted(unknown)}")
    try:
        return SimConfig(**raw)
    except (ValidationError, ValueError) as e:
        raise ParameterException(f"invalid scenario: {e}") from e


def load_scenario(path: Union[str, Path]) -> SimConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ParameterException(f"cannot read scenario {path}: {e}") from e
    config = parse_scenario(text)
    logger.info("scenario_loaded", path=str(path), mode=config.mode.value)
    return config


def coverage_frame(result: SimulationResult) -> pd.DataFrame:
    multi = len(result.coverage) > 1
    rows = []
    for state in result.coverage:
        for timestamp, fraction in enumerate(state.history, start=1):
            row = {"timestamp": timestamp, "coverage_fraction": fraction}
            if multi:
                row["file_id"] = state.file_id.hex()
            rows.append(row)
    columns = ["timestamp", "coverage_fraction"] + (["file_id"] if multi else [])
    return pd.DataFrame(rows, columns=columns)


def rewards_frame(result: SimulationResult) -> pd.DataFrame:
    rewards = result.reward_tally()
    failures = result.failure_tally()
    return pd.DataFrame(
        {
            "node_id": list(rewards),
            "rewards": [rewards[node_id] for node_id in rewards],
            "failures": [failures[node_id] for node_id in rewards],
        }
    )


def adversaries_frame(result: SimulationResult) -> pd.DataFrame:
    columns = ["node_id", "kind", "value", "elected", "evaluated", "wins", "failures",
               "failure_rate", "rewards", "reward_share", "faulty"]
    rows = [
        {
            "node_id": entry.node_id,
            "kind": entry.kind.value,
            "value": entry.value,
            "elected": entry.elected,
            "evaluated": entry.evaluated,
            "wins": entry.wins,
            "failures": entry.failures,
            "failure_rate": entry.failure_rate,
            "rewards": entry.rewards,
            "reward_share": entry.reward_share,
            "faulty": entry.faulty,
        }
        for entry in result.adversary_report()
    ]
    return pd.DataFrame(rows, columns=columns)


def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_outputs(result: SimulationResult, out_dir: Union[str, Path]) -> Dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "coverage": out / "coverage.csv",
        "rewards": out / "rewards.csv",
        "adversaries": out / "adversaries.csv",
        "chain": out / "chain.log",
    }
    _write_csv(coverage_frame(result), paths["coverage"])
    _write_csv(rewards_frame(result), paths["rewards"])
    _write_csv(adversaries_frame(result), paths["adversaries"])
    result.ledger.export_chain(paths["chain"])
    logger.info("outputs_written", out_dir=str(out))
    return paths


def summary_table(result: SimulationResult) -> str:
    summary = summarize(result)
    frame = pd.DataFrame({"metric": list(summary), "value": list(summary.values())})
    return frame.to_string(index=False)
