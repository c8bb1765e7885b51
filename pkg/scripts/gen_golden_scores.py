#!/usr/bin/env python3
"""One-shot generator for the frozen base-score golden table.

Independent of the package on purpose: every score is derived with exact
decimal arithmetic (no binary floats anywhere), and the one-decimal
ceiling is taken on the exact value.  The output is checked into
tests/fixtures/golden_scores.tsv and never regenerated by CI.

Also reports the minimum distance of any uncapped raw score from a 0.1
boundary, to demonstrate that double-precision evaluation cannot land on
the wrong side of a boundary.
"""

import itertools
import sys
from decimal import Decimal, getcontext

getcontext().prec = 150

VALUES = {
    "AV": ("N", "A", "L", "P"),
    "AC": ("L", "H"),
    "PR": ("N", "L", "H"),
    "UI": ("N", "R"),
    "S": ("U", "C"),
    "C": ("N", "L", "H"),
    "I": ("N", "L", "H"),
    "A": ("N", "L", "H"),
}
ORDER = ("AV", "AC", "PR", "UI", "S", "C", "I", "A")

D = Decimal
AV_W = {"N": D("0.85"), "A": D("0.62"), "L": D("0.55"), "P": D("0.2")}
AC_W = {"L": D("0.77"), "H": D("0.44")}
PR_W = {
    "U": {"N": D("0.85"), "L": D("0.62"), "H": D("0.27")},
    "C": {"N": D("0.85"), "L": D("0.68"), "H": D("0.5")},
}
UI_W = {"N": D("0.85"), "R": D("0.62")}
CIA_W = {"N": D("0"), "L": D("0.22"), "H": D("0.56")}

ONE = D(1)
TEN = D(10)


def exact_score(m: dict) -> Decimal:
    iss = ONE - (ONE - CIA_W[m["C"]]) * (ONE - CIA_W[m["I"]]) * (ONE - CIA_W[m["A"]])
    if m["S"] == "U":
        impact = D("6.42") * iss
    else:
        impact = D("7.52") * (iss - D("0.029")) - D("3.25") * (iss - D("0.02")) ** 15
    expl = D("8.22") * AV_W[m["AV"]] * AC_W[m["AC"]] * PR_W[m["S"]][m["PR"]] * UI_W[m["UI"]]
    if impact <= 0:
        return D("0.0")
    raw = impact + expl if m["S"] == "U" else D("1.08") * (impact + expl)
    raw = min(raw, TEN)
    tenths = raw * TEN
    ceiled = tenths.to_integral_value(rounding="ROUND_CEILING")
    return ceiled / TEN


def main() -> int:
    out = sys.argv[1] if len(sys.argv) > 1 else "tests/fixtures/golden_scores.tsv"
    lines = []
    min_gap = D(1)
    for combo in itertools.product(*(VALUES[k] for k in ORDER)):
        m = dict(zip(ORDER, combo))
        score = exact_score(m)
        vec = "/".join(f"{k}:{m[k]}" for k in ORDER)
        lines.append(f"{vec}\t{score}")

        # boundary-distance audit on the uncapped raw value
        iss = ONE - (ONE - CIA_W[m["C"]]) * (ONE - CIA_W[m["I"]]) * (ONE - CIA_W[m["A"]])
        if m["S"] == "U":
            impact = D("6.42") * iss
        else:
            impact = D("7.52") * (iss - D("0.029")) - D("3.25") * (iss - D("0.02")) ** 15
        expl = D("8.22") * AV_W[m["AV"]] * AC_W[m["AC"]] * PR_W[m["S"]][m["PR"]] * UI_W[m["UI"]]
        if impact > 0:
            raw = impact + expl if m["S"] == "U" else D("1.08") * (impact + expl)
            if raw < TEN:
                tenths = raw * TEN
                frac = tenths - tenths.to_integral_value(rounding="ROUND_FLOOR")
                if frac != 0:
                    min_gap = min(min_gap, frac, ONE - frac)

    with open(out, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {len(lines)} vectors to {out}")
    print(f"min distance of raw*10 from an integer boundary: {min_gap}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
