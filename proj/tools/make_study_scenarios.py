#!/usr/bin/env python3
"""Generate the 48-person two-condition scenarios and a synthetic survey.

The same 48 synthetic participants deliberate once in a single chat room
(standard_chat) and once in the swarm condition. Activity levels and
stances are random draws; nothing here tries to model real human behavior.

Usage: tools/make_study_scenarios.py [--out scenarios] [--seed 7]
"""

import argparse
import json
import random
from pathlib import Path

QUESTION = "Which improvement should the city fund first?"
ITEMS = ["bike lanes", "night buses", "park cleanup", "library hours", "street lighting"]
CHATTER = [
    "good point",
    "I'm not sure about that, the budget is tight this year",
    "has anyone looked at what the neighboring towns did?",
    "that would help my commute a lot",
    "we should think about who benefits most",
    "agree with the last message",
    "maintenance costs matter as much as the build cost",
    "my kids would use that every day",
    "what's the timeline on any of these?",
    "safety first, honestly",
    "hmm",
    "I could go either way on this one",
]
DURATION_MS = 360_000
PARTICIPANTS = [f"p{i:02d}" for i in range(1, 49)]


def script_for(rng: random.Random, condition: str):
    script = []
    for who in PARTICIPANTS:
        favorite = rng.choice(ITEMS)
        # Messages per six minutes, skewed: a few talkers, many quiet people.
        count = min(int(rng.lognormvariate(1.3, 0.7)), 25)
        times = sorted(rng.randrange(0, DURATION_MS) for _ in range(count))
        stated = False
        for t in times:
            roll = rng.random()
            if not stated or roll < 0.25:
                strength = rng.randint(1, 3)
                verb = "PROPOSE" if not stated else "SUPPORT"
                body = f"{verb}({favorite}, {strength}) {rng.choice(CHATTER)}"
                stated = True
            elif roll < 0.35:
                other = rng.choice([i for i in ITEMS if i != favorite])
                body = f"not convinced, OPPOSE({other}, {rng.randint(1, 2)})"
            else:
                body = rng.choice(CHATTER)
            script.append({"participant": who, "at_ms": t, "body": body})
    script.sort(key=lambda e: (e["at_ms"], e["participant"]))
    return {
        "name": f"study-{condition}",
        "description": f"48 synthetic participants, {condition} condition of the two-condition protocol.",
        "config": {
            "question": QUESTION,
            "condition": "standard_chat" if condition == "chat" else "swarm",
            "rng_seed": 48,
        },
        "roster": PARTICIPANTS,
        "script": script,
    }


def survey(rng: random.Random):
    answers = (
        ["swarm_by_a_lot"] * 18
        + ["swarm_by_a_little"] * 13
        + ["no_preference"] * 8
        + ["chat_by_a_little"] * 5
        + ["chat_by_a_lot"] * 4
    )
    rng.shuffle(answers)
    lines = ["participant,question,answer"]
    lines += [f"{who},preferred_format,{answer}" for who, answer in zip(PARTICIPANTS, answers)]
    return "\n".join(lines) + "\n"


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "scenarios"))
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rng = random.Random(args.seed)
    for condition in ("chat", "swarm"):
        scenario = script_for(rng, condition)
        (out / f"study-{condition}.json").write_text(json.dumps(scenario, indent=1) + "\n")
    (out / "study-survey.csv").write_text(survey(rng))


if __name__ == "__main__":
    main()
