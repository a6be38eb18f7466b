#!/usr/bin/env python3
"""Writes data/survey_reconstructed.csv.

SYNTHETIC DATA. The raw questionnaire responses are not public, so this
script builds a 100-row table whose marginals match the published summary:

  * 4 rows miss two or more required answers (dropped at load, n = 96)
  * 57 of the 95 respondents who state their sex are female
  * 95 of 96 are younger than 55
  * 96 of 96 own a phone, 95 of 96 report reliable internet
  * 24 of 96 phones are Apple, 3 are Huawei
  * 46 of 96 answer q7 >= 4
  * 10 of the 94 q10 answers name a ride-hailing app

Everything else (degree, q8/q9 shape, brand mix among Android phones, q11
text) is invented. Output is deterministic.
"""

import csv
import random
import sys
from pathlib import Path

SEED = 20240611
RETAINED = 96

HEADER = ["age", "sex", "degree", "internet", "phone", "brand",
          "q7", "q8", "q9", "q10", "q11"]

CALL = ["Call the barangay", "Call 911", "Call barangay ambulance",
        "Call the hotline", "Call the city ambulance", "Phone the barangay hall",
        "Call 911 then barangay", "Call rescue hotline"]
PERSONAL = ["Drive our car", "Our own car", "My motor", "Family car",
            "Own motorcycle", "Drive to hospital"]
TNC = ["Grab", "Grab car", "Angkas", "Book a Grab", "JoyRide"]
OTHER = ["Taxi", "Tricycle", "Jeepney", "Walk to the clinic", "Ask a neighbor"]
FEATURES = ["Live map of the ambulance", "One tap call", "Hotline number",
            "Show arrival time", "Verified drivers", "Works offline",
            "Tagalog language option", "Share location with family", ""]


def build(rng: random.Random):
    n = RETAINED
    rows = [dict.fromkeys(HEADER, "") for _ in range(n)]

    # ages: one respondent 55+, the rest 16..54 skewed young
    ages = [rng.choice(range(16, 30)) for _ in range(60)]
    ages += [rng.choice(range(30, 55)) for _ in range(35)]
    ages.append(58)
    rng.shuffle(ages)
    for r, a in zip(rows, ages):
        r["age"] = str(a)

    # sex: 57 female, 38 male, 1 blank
    sexes = ["female"] * 57 + ["male"] * 38 + [""]
    rng.shuffle(sexes)
    for r, s in zip(rows, sexes):
        r["sex"] = s

    degrees = ["yes"] * 41 + ["no"] * 55
    rng.shuffle(degrees)
    internet = ["yes"] * 95 + ["no"]
    rng.shuffle(internet)
    for r, d, i in zip(rows, degrees, internet):
        r["degree"], r["internet"], r["phone"] = d, i, "yes"

    brands = (["iPhone"] * 16 + ["Apple"] * 8 + ["Huawei"] * 3 + ["Samsung"] * 22 +
              ["Oppo"] * 15 + ["Vivo"] * 12 + ["Realme"] * 9 + ["Xiaomi"] * 6 + ["Infinix"] * 5)
    assert len(brands) == n
    rng.shuffle(brands)
    for r, b in zip(rows, brands):
        r["brand"] = b

    q7 = [1] * 14 + [2] * 16 + [3] * 20 + [4] * 26 + [5] * 20
    rng.shuffle(q7)
    for r, v in zip(rows, q7):
        r["q7"] = str(v)
        q8 = rng.choices([1, 2, 3, 4, 5], weights=[3, 6, 20, 35, 36])[0]
        q9 = min(5, max(1, q8 + rng.choice([-1, 0, 0, 0, 1])))
        r["q8"], r["q9"] = str(q8), str(q9)

    # q10: oldest ten include 4 non-call answers, youngest ten 7 call answers;
    # two blanks; 10 ride-hailing answers overall among the 94 answered.
    order = sorted(range(n), key=lambda i: (int(rows[i]["age"]), i))
    youngest, oldest = order[:10], order[-10:]
    middle = order[10:-10]
    modes = {}
    for k, i in enumerate(youngest):
        modes[i] = "call" if k < 7 else ("tnc" if k < 9 else "other")
    for k, i in enumerate(oldest):
        modes[i] = ["personal", "personal", "tnc", "personal"][k] if k < 4 else "call"
    rest = ["tnc"] * 7 + ["personal"] * 11 + ["other"] * 8 + ["blank"] * 2
    rest += ["call"] * (len(middle) - len(rest))
    rng.shuffle(rest)
    for i, m in zip(middle, rest):
        modes[i] = m
    pools = {"call": CALL, "personal": PERSONAL, "tnc": TNC, "other": OTHER}
    for i, m in modes.items():
        rows[i]["q10"] = "" if m == "blank" else rng.choice(pools[m])
        rows[i]["q11"] = rng.choice(FEATURES)

    # the blank-sex row must not also miss q10
    for i, r in enumerate(rows):
        if r["sex"] == "" and r["q10"] == "":
            j = next(k for k, rr in enumerate(rows) if rr["sex"] and rr["q10"] and modes[k] == "call")
            r["q10"], rows[j]["q10"] = rows[j]["q10"], ""
    return rows


def excluded_rows(rng: random.Random):
    out = []
    for blanks in (["age", "q8"], ["brand", "q9", "q10"], ["sex", "internet"], ["q7", "q8", "q9", "q10"]):
        r = {"age": str(rng.randint(18, 50)), "sex": rng.choice(["male", "female"]),
             "degree": "no", "internet": "yes", "phone": "yes", "brand": "Samsung",
             "q7": "3", "q8": "4", "q9": "4", "q10": "Call 911", "q11": ""}
        for b in blanks:
            r[b] = ""
        out.append(r)
    return out


def main():
    rng = random.Random(SEED)
    rows = build(rng)
    bad = excluded_rows(rng)
    for pos, r in zip((11, 36, 57, 90), bad):
        rows.insert(pos, r)
    assert len(rows) == 100
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "data" / "survey_reconstructed.csv"
    with out.open("w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=HEADER, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


if __name__ == "__main__":
    main()
