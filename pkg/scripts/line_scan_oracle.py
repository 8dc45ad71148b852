"""Reference G_C by a plain scan of a ConceptNet dump (stdlib only).

Does not import coronet. Prints {"concepts": [...], "G_C": [[...]]} as JSON.

    python scripts/line_scan_oracle.py --dump d.csv --seeds cup,table --relations F
"""
import argparse
import gzip
import json
import sys

SPATIAL = ["AtLocation", "LocatedNear"]
TEMPORAL = ["HasSubevent", "HasFirstSubevent", "HasLastSubevent", "HasPrerequisite"]
REST = ["UsedFor", "Causes", "MotivatedByGoal", "ObstructedBy", "CreatedBy", "MadeOf",
        "HasA", "HasProperty", "Antonym", "SimilarTo"]
SETS = {
    "S": set(SPATIAL),
    "T": set(TEMPORAL),
    "ST": set(SPATIAL + TEMPORAL),
    "F": set(SPATIAL + TEMPORAL + REST),
    "F-ST": set(REST),
    "All": None,
}


def term(uri):
    # /c/en/<term>[/pos[/...]] -> term, or None for anything else
    parts = uri.split("/")
    if len(parts) < 4 or parts[1] != "c" or parts[2] != "en" or not parts[3]:
        return None
    return "_".join(parts[3].lower().split())


def scan(lines, seeds, relations):
    pos = {s: i for i, s in enumerate(seeds)}
    g = [[0] * len(seeds) for _ in seeds]
    for line in lines:
        cols = line.rstrip("\r\n").split("\t")
        if len(cols) < 5:
            continue
        rel = cols[1][3:] if cols[1].startswith("/r/") else None
        if rel is None or (relations is not None and rel not in relations):
            continue
        a, b = term(cols[2]), term(cols[3])
        if a is None or b is None or a == b:
            continue
        if a in pos and b in pos:
            g[pos[a]][pos[b]] += 1
    return g


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--dump", required=True)
    ap.add_argument("--seeds", required=True, help="comma-separated concepts, in order")
    ap.add_argument("--relations", default="F", choices=sorted(SETS))
    args = ap.parse_args(argv)
    seeds = [s.strip() for s in args.seeds.split(",") if s.strip()]
    with open(args.dump, "rb") as fh:
        gz = fh.read(2) == b"\x1f\x8b"
    opener = gzip.open if gz else open
    with opener(args.dump, "rt", encoding="utf-8") as fh:
        g = scan(fh, seeds, SETS[args.relations])
    json.dump({"concepts": seeds, "G_C": g}, sys.stdout)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
