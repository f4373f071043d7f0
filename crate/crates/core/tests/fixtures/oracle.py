"""Independent metric oracle for the 50-item fixture campaign.

Reads a records file written by `mcqscope run` and recomputes the headline
metrics from labels, option permutations and option kinds alone, without
using any content field written by the harness.

    python3 oracle.py records.jsonl > oracle_metrics.json
"""

import json
import math
import sys
from collections import Counter, defaultdict

SPECIAL_OF_KIND = {"no_correct_answer": "X", "refuse": "Y", "i_do_not_know": "Z"}
LETTERS = "ABCDEFG"


def content(rec, label):
    """Canonical option index as a letter, or X/Y/Z/NaN."""
    if label in ("X", "Y", "Z", "NaN"):
        return label
    slot = LETTERS.index(label)
    kind = rec["options"][slot]["kind"]
    if kind != "regular":
        return SPECIAL_OF_KIND[kind]
    canonical = rec["option_permutation"].index(slot)
    return LETTERS[canonical]


ORDER = {c: i for i, c in enumerate("ABCDXYZ")}
ORDER["NaN"] = 99


def vote(answers):
    counts = Counter(answers)
    best = max(counts.values())
    return min((a for a, c in counts.items() if c == best), key=lambda a: ORDER[a])


def entropy(answers):
    n = len(answers)
    h = 0.0
    for c in Counter(answers).values():
        p = c / n
        h -= p * math.log2(p)
    return max(h, 0.0)


def rstd(recalls):
    m = sum(recalls) / len(recalls)
    return math.sqrt(sum((r - m) ** 2 for r in recalls) / len(recalls))


def main(path):
    recs = [json.loads(line) for line in open(path) if line.strip()]
    channels = {"first_token": "first_token_label", "text": "text_label", "debiased": "debiased_label"}
    out = {"runs": len(recs), "items": len({r["key"]["item_id"] for r in recs})}

    def key(r):
        k = r["key"]
        return (k["perturbation_type"], k["perturbation_index"], k["shuffle_index"])

    base = [r for r in recs if key(r) == ("none", 0, 0)]
    sb = {}
    for ch, field in channels.items():
        hits = defaultdict(lambda: [0, 0])
        correct = 0
        for r in base:
            ok = r[field] == r["gold_label"]
            correct += ok
            hits[r["gold_label"]][0] += ok
            hits[r["gold_label"]][1] += 1
        recalls = [hits[g][0] / hits[g][1] for g in sorted(hits)]
        sb[ch] = {"accuracy": correct / len(base), "rstd": rstd(recalls),
                  "recalls": {g: hits[g][0] / hits[g][1] for g in sorted(hits)}}
    out["selection_bias"] = sb

    def mismatch(rs):
        return sum(content(r, r["first_token_label"]) != content(r, r["text_label"]) for r in rs) / len(rs)

    out["mismatch"] = {"baseline": mismatch(base), "all_runs": mismatch(recs)}

    by_item = defaultdict(list)
    for r in recs:
        by_item[r["key"]["item_id"]].append(r)
    ent = {}
    for ptype in ["letter_typos", "letter_swap", "word_swap", "option_swap"]:
        ent[ptype] = {}
        for ch in ["first_token", "text"]:
            values = []
            for item in sorted(by_item):
                rs = [r for r in by_item[item] if r["key"]["perturbation_type"] == ptype]
                answers = {(r["key"]["perturbation_index"], r["key"]["shuffle_index"]):
                           content(r, r[channels[ch]]) for r in rs}
                if ptype == "option_swap":
                    values.append(entropy([answers[(0, s)] for s in range(20)]))
                else:
                    voted = [vote([answers[(p, s)] for s in range(5)]) for p in range(4)]
                    values.append(entropy(voted))
            ent[ptype][ch] = sum(values) / len(values)
    out["entropy"] = ent

    fl = {}
    for ch in ["first_token", "text"]:
        before, after = {}, {}
        for item in sorted(by_item):
            rs = [r for r in by_item[item] if r["key"]["perturbation_type"] == "extra_options"]
            arm = lambda a: vote([content(r, r[channels[ch]]) for r in rs if r["key"]["perturbation_index"] == a])
            before[item], after[item] = arm(0), arm(1)
        rate = sum(before[i] != after[i] for i in before) / len(before)
        fl[ch] = {"rate": rate,
                  "before": dict(sorted(Counter(before.values()).items())),
                  "after": dict(sorted(Counter(after.values()).items()))}
    out["floating"] = fl
    json.dump(out, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main(sys.argv[1])
