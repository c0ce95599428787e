"""Regenerate the bundled 32-record synthetic dataset.

Each record mixes tweet noise (mentions, URLs, hashtags, emoji) with a few
class-specific words, so the three classes are separable by vocabulary.
"""

import json
import random
import sys
from pathlib import Path

CUES = {
    "negative": ["scary", "death", "fear", "panic", "terrible", "lockdown misery", "grief", "worried sick"],
    "neutral": ["report", "update", "schedule", "statistics", "announcement", "press briefing", "census", "timetable"],
    "positive": ["happy", "brilliant", "recovered", "grateful", "healthy", "wonderful news", "safety first", "good vibes"],
}
FILLER = ["the city", "my family", "our hospital", "this week", "the government", "people outside",
          "local shops", "the vaccine trial", "schools", "the neighbours"]
NOISE = ["@who", "@cdcgov", "https://t.co/abc123", "#covid19", "#stayhome", "\U0001f637", "RT @news:", "www.example.org"]
COUNTRIES = ["USA", "Brazil", "India", "Russia", "South Africa"]


def sentence(rng, label):
    words = [rng.choice(CUES[label]), rng.choice(FILLER), rng.choice(CUES[label])]
    rng.shuffle(words)
    return " ".join(words) + rng.choice([".", "!", "?", "..."])


def main(out):
    rng = random.Random(7)
    counts = {"negative": 11, "neutral": 10, "positive": 11}
    labels = [lab for lab, n in counts.items() for _ in range(n)]
    rng.shuffle(labels)
    lines = []
    for i, label in enumerate(labels):
        parts = [sentence(rng, label) for _ in range(rng.choice([1, 1, 2]))]
        noise = rng.sample(NOISE, 2)
        text = f"{noise[0]} " + " ".join(parts) + f" {noise[1]}"
        rec = {"id": f"syn-{i:02d}", "text": text, "label": label,
               "country": rng.choice(COUNTRIES), "date": f"2020-0{rng.randint(3, 6)}-{rng.randint(10, 28)}"}
        lines.append(json.dumps(rec, ensure_ascii=False))
    Path(out).write_text("\n".join(lines) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parents[1] / "src/macbig/data/synthetic.jsonl")
