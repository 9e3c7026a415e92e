#!/usr/bin/env python3
"""Regenerate the committed frame-stream fixtures from the engine.

Each fixture is what a console receives over the gateway: a start ack
carrying the config payload, then one state frame per tick.
"""

import json
from pathlib import Path

from cardioloop.adaptation import Condition
from cardioloop.rider import RiderModel, RiderPolicy
from cardioloop.session import (Seeds, SessionConfig, config_record,
                                run_simulated, tick_record)
from cardioloop.zones import AthleteProfile, compute_zone_model

OUT = Path(__file__).resolve().parent.parent / "fixtures"

CONDITIONS = {
    "adaptive": (Condition.ADAPTIVE_NPC, "follow_npc"),
    "random": (Condition.RANDOM_NPC, "follow_npc"),
    "baseline": (Condition.BASELINE, "follow_bike"),
}


def state_frame(state, wall_t):
    rec = tick_record(state)
    rec.pop("type")
    return {"type": "state", **rec, "wall_t": wall_t}


def main():
    OUT.mkdir(exist_ok=True)
    for name, (condition, policy_kind) in CONDITIONS.items():
        config = SessionConfig(
            participant_id=f"fixture-{name}",
            condition=condition,
            zone_schedule=((1, 20.0), (2, 20.0), (3, 20.0)),
            training_s=10.0,
            tick_hz=10,
            hr_window_s=2.0,
            seeds=Seeds.from_base(1),
        )
        log = run_simulated(config, RiderModel(), RiderPolicy(policy_kind))
        model = compute_zone_model(AthleteProfile(config.age))
        lines = [json.dumps({"type": "ack", "ack": "start",
                             "config": config_record(config, None, model)})]
        wall = 1_000_000_000.0
        for state in log.ticks:
            lines.append(json.dumps(state_frame(state, wall)))
            wall += 1.0 / config.tick_hz
        path = OUT / f"{name}.jsonl"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"wrote {path} ({len(lines)} frames)")


if __name__ == "__main__":
    main()
