#!/usr/bin/env python3
"""Regenerate the desk-scale English fixture corpus (deterministic).

Writes data/fixtures/english_desk.jsonl: five pseudo-tasks with different
sentence shapes and length profiles, split into train/val/probe. Rerunning
this script reproduces the checked-in file byte for byte.
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from ordinfo.rng import SplitMix64
from ordinfo.textdata import SentenceRecord, tokenize, write_sentences

NAMES = ["anna", "ben", "clara", "david", "ella", "felix", "grace", "henry",
         "iris", "jack", "karen", "liam", "mia", "noah", "olga", "paul"]
PLACES = ["market", "harbor", "library", "station", "garden", "museum",
          "village", "forest", "bridge", "castle", "valley", "square"]
OBJECTS = ["basket", "letter", "lantern", "map", "coin", "bottle", "candle",
           "ladder", "mirror", "blanket", "barrel", "compass"]
ANIMALS = ["fox", "heron", "otter", "badger", "sparrow", "rabbit"]
PRODUCTS = ["film", "novel", "album", "restaurant", "camera", "phone",
            "hotel", "show", "game", "recipe"]
EVAL_ADJ = ["brilliant", "dull", "charming", "clumsy", "elegant", "noisy",
            "pleasant", "tedious", "vivid", "bland"]
DEGREE = ["truly", "rather", "surprisingly", "almost", "remarkably"]
OPINION_V = ["enjoyed", "disliked", "admired", "ignored", "recommended"]
PAST_V = ["carried", "dropped", "found", "painted", "repaired", "borrowed",
          "opened", "followed", "watched", "counted"]
MOTION_V = ["walked", "hurried", "wandered", "sailed", "climbed", "returned"]
BASE_V = ["carry", "find", "paint", "repair", "borrow", "open", "follow", "count"]
WEATHER = ["rain", "fog", "wind", "snow", "sunlight"]
SEASONS = ["spring", "summer", "autumn", "winter"]
COLORS = ["red", "green", "blue", "grey", "golden", "pale"]
MATERIALS = ["wooden", "copper", "stone", "glass", "woven", "iron"]
TIMES = ["morning", "evening", "noon", "midnight", "dusk"]
QUANT = ["three", "four", "five", "seven", "nine", "twelve"]
FEELING = ["happy", "tired", "curious", "nervous", "proud", "calm"]

TEMPLATES = {
    "reviews": [
        ["the", PRODUCTS, "was", DEGREE, EVAL_ADJ],
        ["i", OPINION_V, "the", EVAL_ADJ, PRODUCTS],
        ["this", PRODUCTS, "felt", EVAL_ADJ, "and", EVAL_ADJ],
        ["the", PRODUCTS, "seemed", EVAL_ADJ, "but", "the", "ending", "was", EVAL_ADJ],
        ["a", DEGREE, EVAL_ADJ, PRODUCTS, "from", "start", "to", "finish"],
        ["my", "friends", OPINION_V, "the", PRODUCTS, "more", "than", "i", "did"],
        ["the", "new", PRODUCTS, "was", EVAL_ADJ, "in", "every", "scene"],
        ["critics", "called", "the", PRODUCTS, DEGREE, EVAL_ADJ],
    ],
    "questions": [
        ["where", "did", NAMES, BASE_V, "the", OBJECTS, "?"],
        ["why", "was", "the", PLACES, "so", EVAL_ADJ, "?"],
        ["did", NAMES, "ever", BASE_V, "the", COLORS, OBJECTS, "?"],
        ["who", "will", BASE_V, "the", OBJECTS, "before", TIMES, "?"],
        ["when", "does", "the", PLACES, "open", "in", SEASONS, "?"],
        ["how", "many", OBJECTS, "did", NAMES, BASE_V, "?"],
        ["was", "the", ANIMALS, "near", "the", PLACES, "at", TIMES, "?"],
    ],
    "facts": [
        ["the", PLACES, "holds", QUANT, MATERIALS, OBJECTS],
        ["every", SEASONS, "the", WEATHER, "reaches", "the", PLACES],
        ["the", COLORS, ANIMALS, "lives", "near", "the", PLACES],
        ["a", MATERIALS, OBJECTS, "weighs", "less", "than", "a", MATERIALS, OBJECTS],
        ["the", "old", PLACES, "was", "built", "from", MATERIALS, "blocks"],
        ["most", ANIMALS + ["travelers"], "avoid", "the", PLACES, "during", WEATHER],
        ["the", PLACES, "closes", "at", TIMES, "in", SEASONS],
    ],
    "stories": [
        [NAMES, MOTION_V, "to", "the", PLACES, "and", PAST_V, "a", OBJECTS],
        ["at", TIMES, NAMES, PAST_V, "the", COLORS, OBJECTS],
        [NAMES, "and", NAMES, MOTION_V, "through", "the", PLACES, "in", "the", WEATHER],
        ["the", ANIMALS, "watched", "while", NAMES, PAST_V, "the", OBJECTS],
        [NAMES, "felt", FEELING, "when", "the", WEATHER, "covered", "the", PLACES],
        ["after", "the", WEATHER, NAMES, PAST_V, QUANT, OBJECTS],
        ["one", TIMES, "a", ANIMALS, MOTION_V, "past", "the", MATERIALS, "door"],
    ],
    "dialogue": [
        ["well", ",", "i", "think", "the", OBJECTS, "is", "under", "the", OBJECTS],
        ["honestly", ",", NAMES, "never", "liked", "the", PLACES],
        ["listen", ",", "we", "should", BASE_V, "the", OBJECTS, "before", TIMES],
        ["oh", ",", "the", ANIMALS, "is", "back", "in", "the", "garden"],
        ["sure", ",", "but", "who", "will", "watch", "the", OBJECTS, "?"],
        ["fine", ",", "i", "feel", FEELING, "about", "the", "plan"],
        ["look", ",", "the", WEATHER, "is", "coming", "over", "the", PLACES],
    ],
}

COUNTS = {"train": 220, "val": 20, "probe": 100}


def render(template, gen):
    words = []
    for slot in template:
        words.append(slot if isinstance(slot, str) else gen.choice(slot))
    return " ".join(words)


def main():
    out_path = os.path.join(
        os.path.dirname(__file__), "..", "data", "fixtures", "english_desk.jsonl"
    )
    os.makedirs(os.path.dirname(out_path), exist_ok=True)
    gen = SplitMix64(314159)
    records = []
    for task in sorted(TEMPLATES):
        templates = TEMPLATES[task]
        idx = 0
        for split in ("train", "val", "probe"):
            for _ in range(COUNTS[split]):
                text = render(gen.choice(templates), gen)
                records.append(
                    SentenceRecord(
                        f"{task}-{idx:04d}", task, tuple(tokenize(text)), split
                    )
                )
                idx += 1
    write_sentences(records, out_path)
    print(f"wrote {len(records)} sentences -> {out_path}")


if __name__ == "__main__":
    main()
