"""Regenerate normalization_corpus.txt (1,000 lines, fixed seed)."""

import random
from pathlib import Path

TEMPLATES = [
    "Is the room {n} mm wide?",
    "Book a table for {n} people at {h} PM!",
    "Does the {place} have free WiFi?",
    "The fee is {n}.{d} pounds, right?",
    "I need {n:,} points; is that OK?",
    "Can I check in at {h}:{m:02d}?",
    "Call me at extension {n}...",
    "It's {n} km from the centre -- is there a shuttle?",
    "\"{place}\" opens at {h} am (weekdays only).",
    "Do you allow pets? I have {n} dogs & {k} cats.",
    "Café {place} serves crème brûlée until {h} o'clock.",
    "How much is parking?? ({n} cars)",
    "Is there a {n}mm gap or a {n} mm gap?",
    "Room 2{k}B, floor {k}; any mm-wave issues?",
    "Price list: {n}, {k}, and {m} euros.",
    "Version {n}.{d}.{k} of the menu",
    "{big} is a very large number",
    "MM, mm and Mm are all abbreviations here.",
]
PLACES = ["Hilton", "A and B Guest House", "Pizza Hut", "the Copper Kettle", "Ávila Inn", "Zen Garden"]


def main() -> None:
    rng = random.Random(20200823)
    lines = []
    for _ in range(1000):
        t = rng.choice(TEMPLATES)
        lines.append(
            t.format(
                n=rng.choice([0, 7, 12, 42, 105, 999, 1000, 2020, 123456, rng.randrange(0, 10**6)]),
                d=rng.randrange(0, 100),
                h=rng.randrange(1, 13),
                m=rng.randrange(0, 60),
                k=rng.randrange(0, 20),
                big=rng.randrange(10**9, 10**12),
                place=rng.choice(PLACES),
            )
        )
    Path(__file__).with_name("normalization_corpus.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
