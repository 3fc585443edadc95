"""JSON-lines adversarial-example store: one header line, then one record per sample."""
from __future__ import annotations

import json
from typing import List, Tuple

from .base import AttackBudget, AttackOutcome

STORE_FORMAT = "tabrobust-campaign"


def dumps_campaign(outcomes: List[AttackOutcome], *, schema_hash: str, model_id: str, attack: str,
                   budget: AttackBudget, manifest_id: str = "") -> str:
    header = {
        "format": STORE_FORMAT,
        "schema_hash": schema_hash,
        "model_id": model_id,
        "attack": attack,
        "budget": budget.to_json(),
        "manifest_id": manifest_id,
        "n": len(outcomes),
    }
    lines = [json.dumps(header, sort_keys=True)]
    lines += [json.dumps(o.to_json(), sort_keys=True) for o in outcomes]
    return "\n".join(lines) + "\n"


def save_campaign(path, outcomes, **meta):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_campaign(outcomes, **meta))


def load_campaign(path) -> Tuple[dict, List[AttackOutcome]]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    header = json.loads(lines[0])
    if header.get("format") != STORE_FORMAT:
        raise ValueError(f"{path}: not a campaign file")
    header["budget"] = AttackBudget(**header["budget"])
    return header, [AttackOutcome.from_json(json.loads(ln)) for ln in lines[1:]]
