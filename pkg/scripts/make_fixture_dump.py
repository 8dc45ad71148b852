"""Regenerate src/coronet/data/conceptnet_fixture.csv (deterministic)."""
import json
import random
from pathlib import Path

from coronet.vocab_pools import DISTRACTORS, EVENT_CLASSES

OUT = Path(__file__).resolve().parents[1] / "src" / "coronet" / "data" / "conceptnet_fixture.csv"

OBJECTS = sorted({t for cls in EVENT_CLASSES for t in cls} | set(DISTRACTORS))
EXTRA = ["reading", "kitchen", "drink", "coffee", "sleeping", "bedroom", "house",
         "office", "cleaning", "food", "water", "paper", "wood", "glass", "walking",
         "hungry", "tired", "coffee_table", "living_room", "cell_phone", "dust", "wake_up"]
RELATIONS = ["AtLocation", "LocatedNear", "HasSubevent", "HasFirstSubevent",
             "HasLastSubevent", "HasPrerequisite", "UsedFor", "Causes", "MotivatedByGoal",
             "ObstructedBy", "CreatedBy", "MadeOf", "HasA", "HasProperty", "Antonym",
             "SimilarTo", "RelatedTo", "Synonym", "IsA", "CapableOf", "PartOf", "Desires",
             "FormOf", "DerivedFrom"]
SENSES = ["", "", "", "/n", "/n/wn/artifact", "/v"]


def uri(lang, term, rng):
    return f"/c/{lang}/{term}{rng.choice(SENSES)}"


def line(rel, start, end, rng):
    meta = {"dataset": "/d/conceptnet/4/en", "weight": round(rng.uniform(0.5, 4.0), 3)}
    return f"/a/[/r/{rel}/,{start}/,{end}/]\t/r/{rel}\t{start}\t{end}\t{json.dumps(meta)}"


def main():
    rng = random.Random(20240117)
    concepts = OBJECTS + EXTRA
    rows = []
    for _ in range(170):
        rel = rng.choice(RELATIONS)
        a = rng.choice(OBJECTS if rng.random() < 0.7 else concepts)
        b = rng.choice(concepts)
        if a == b:
            continue
        rows.append(line(rel, uri("en", a, rng), uri("en", b, rng), rng))
    # repeated assertions under different relations and senses
    for rel in ("AtLocation", "LocatedNear", "UsedFor"):
        rows.append(line(rel, "/c/en/book", "/c/en/shelf", rng))
    rows.append(line("UsedFor", "/c/en/book", "/c/en/reading", rng))
    rows.append(line("CapableOf", "/c/en/broom", "/c/en/cleaning/v", rng))
    for fr, en in (("livre", "book"), ("porte", "door"), ("tasse", "cup"), ("lit", "bed")):
        rows.append(line("Synonym", f"/c/fr/{fr}", f"/c/en/{en}", rng))
        rows.append(line("AtLocation", f"/c/fr/{fr}", "/c/fr/maison", rng))
    for de in ("buch", "tisch", "stuhl"):
        rows.append(line("RelatedTo", f"/c/de/{de}", f"/c/en/{rng.choice(OBJECTS)}", rng))
    for term in ("table", "door", "lamp"):
        rows.append(line("ExternalURL", f"/c/en/{term}", f"http://dbpedia.org/resource/{term.title()}", rng))
    rows.append(line("dbpedia/genre", "/c/en/book", "/c/en/paper", rng))
    rng.shuffle(rows)
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text("\n".join(rows) + "\n", encoding="utf-8")
    print(f"wrote {len(rows)} lines to {OUT}")


if __name__ == "__main__":
    main()
