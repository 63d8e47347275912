"""The standalone lemma suites on their own.

No SCF is needed: the combinatorial identities are exact integer checks,
the Yukawa derivative bounds are evaluated in multiprecision, and the
operator-norm probes give lower estimates that must stay under the stated
bounds.  The script prints the tightest margin per lemma.

Run with ``python3 demos/verify_lemmas.py`` (under a minute).
"""

from collections import defaultdict

from prhf.verify.suite import run_suite


def main() -> None:
    rows = run_suite(trials=3, b1_order=3, c2_cases=4, c3_cases=200)
    by_lemma = defaultdict(list)
    for row in rows:
        by_lemma[row.lemma].append(row)
    for lemma, group in by_lemma.items():
        tight = min(group, key=lambda r: r.margin)
        failed = sum(not r.passed for r in group)
        print(f"{lemma:16s} cases = {len(group):4d}  failed = {failed}  "
              f"tightest margin = {tight.margin:+.3e} ({tight.case})")


if __name__ == "__main__":
    main()
