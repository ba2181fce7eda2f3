#!/usr/bin/env python3
"""Writes fixtures/synthetic/{rubric.json,dataset.jsonl}.

Sixty short responses to one physics question, each assembled from a
positive or a negative sentence per subscore. Deterministic for a given seed.
"""
import argparse
import json
import pathlib
import random

SUBSCORES = [
    ("level_unchanged", "concept", "States that the water level stays the same after the ice melts."),
    ("displacement", "concept", "Says the floating ice displaces a volume of water equal to its own weight."),
    ("buoyancy_link", "reasoning", "Connects floating to buoyancy: the ice is supported by the water it pushes aside."),
    ("mass_conservation", "reasoning", "Argues that the melted ice has the same mass and fills exactly the displaced volume."),
]

POSITIVE = {
    "level_unchanged": [
        "The water level stays the same.",
        "Nothing changes, the level is exactly where it was.",
        "The glass ends up just as full as before.",
    ],
    "displacement": [
        "The ice already pushes aside water equal to its weight.",
        "A floating cube displaces its own weight of water.",
        "The ice displaces as much water as it weighs.",
    ],
    "buoyancy_link": [
        "It floats because buoyancy from the displaced water holds it up.",
        "The buoyant force from the pushed-aside water supports the ice.",
        "Archimedes says the upward push equals the weight of water moved, so it floats.",
    ],
    "mass_conservation": [
        "When it melts the mass does not change, so the meltwater fills exactly the hole it made.",
        "Melting keeps the mass, so the new water takes up the displaced volume.",
        "The meltwater has the same mass as the ice and fits the same space it displaced.",
    ],
}

NEGATIVE = {
    "level_unchanged": [
        "The water level goes up.",
        "The glass will overflow a little.",
        "The level drops because ice is bigger than water.",
    ],
    "displacement": [
        "The ice just sits on top.",
        "Ice is lighter so it takes no room in the water.",
        "",
    ],
    "buoyancy_link": [
        "It floats because it is cold.",
        "Ice floats since it is hard.",
        "",
    ],
    "mass_conservation": [
        "Melting adds more water to the glass.",
        "The ice turns into extra water.",
        "",
    ],
}


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="fixtures/synthetic")
    ap.add_argument("--n", type=int, default=60)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rubric = {
        "question_id": "ice-melt",
        "question_text": "An ice cube floats in a full glass of water. What happens to the water level when it melts? Explain.",
        "subscores": [{"name": n, "kind": k, "criteria": c, "points": 1} for n, k, c in SUBSCORES],
        "max_total": len(SUBSCORES),
    }
    (out / "rubric.json").write_text(json.dumps(rubric, indent=2) + "\n")

    rates = {"level_unchanged": 0.55, "displacement": 0.45, "buoyancy_link": 0.4, "mass_conservation": 0.35}
    lines = []
    for i in range(args.n):
        gold = {}
        parts = []
        for name, _, _ in SUBSCORES:
            value = 1 if rng.random() < rates[name] else 0
            gold[name] = value
            sentence = rng.choice((POSITIVE if value else NEGATIVE)[name])
            if sentence:
                parts.append(sentence)
        if not parts:
            parts.append("I am not sure what happens.")
        # Response id and a touch of noise keep every text distinct.
        parts.append(f"(answer {i + 1})")
        record = {
            "id": f"r{i + 1:03d}",
            "question_id": rubric["question_id"],
            "text": " ".join(parts),
            "gold": gold,
            "total": sum(gold.values()),
        }
        lines.append(json.dumps(record))
    (out / "dataset.jsonl").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
