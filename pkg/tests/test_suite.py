import csv
import io
import math


from prhf.verify.suite import (VerifyRow, appendix_a_rows, hash_seed, lemma_b1_rows, lemma_c1_rows,
                               lemma_c2_cases, lemma_c2_rows, lemma_c3_rows, resolvent_rows, verify_csv)


def test_appendix_a_all_pass():
    rows = appendix_a_rows(6, 20)
    assert rows and all(r.passed for r in rows)
    lemmas = {r.lemma for r in rows}
    assert lemmas == {"A.sum", "A.multinomial", "A.factorial", "A.stirling"}
    assert all(r.measured == 0.0 for r in rows if r.equality)


def test_b1_rows_small():
    rows = lemma_b1_rows(max_order=2)
    # sum over j of (#sigma) (j + 1) cases, two chains each
    assert len(rows) == 2 * sum((j + 1) * (j + 1) * (j + 2) // 2 for j in range(3))
    assert all(r.passed for r in rows)
    assert any("random" in r.case for r in rows)


def test_c1_advisory_passes():
    rows = lemma_c1_rows(trials=3, K1=1e-6)
    assert rows[0].passed and rows[0].case.endswith(",advisory")
    ok = lemma_c1_rows(trials=3, K1=100.0)
    assert ok[0].passed and not ok[0].case.endswith(",advisory")


def test_c2_cases_deterministic():
    cases = lemma_c2_cases(20, seed=0)
    assert cases == lemma_c2_cases(20, seed=0)
    assert cases[0] == (0, (2, 0, 0), 5.0, 1.25)
    for _, beta, p, q in cases:
        r = 1 / (2 - 1 / p - 1 / q)
        assert r * (sum(beta) + 2) > 3


def test_c2_rows_small():
    rows = lemma_c2_rows(cases=2, trials=2, n=32, box_length=12.0)
    assert all(r.passed for r in rows)
    assert rows[0].lemma == "C.2" and "r=1" in rows[0].case


def test_c3_rows():
    rows = lemma_c3_rows(cases=50, fd_order=2)
    assert all(r.passed for r in rows)
    assert sum(r.lemma == "C.3-recurrence" for r in rows) == 1 + 3 + 6


def test_resolvent_rows():
    assert all(r.passed for r in resolvent_rows())


def test_margin_semantics():
    assert VerifyRow("x", "c", 0.5, 2.0, True).margin == 0.75
    assert VerifyRow("x", "c", 3.0, 0.0, False, equality=True).margin == -3.0


def test_hash_seed_distinct():
    seen = {hash_seed(0, s, e) for s in [(1, 0, 0), (0, 1, 0), (0, 0, 1)] for e in range(2)}
    assert len(seen) == 6


def test_csv_format():
    rows = [VerifyRow("C.4", "x=1", 1 / 3, 1e-8, False), VerifyRow("A.sum", "s", 0.0, 0.0, True, True)]
    text = verify_csv(rows)
    assert text.endswith("\n") and "\r" not in text
    parsed = list(csv.reader(io.StringIO(text)))
    assert parsed[0] == ["lemma", "case", "measured", "bound", "margin", "status"]
    assert float(parsed[1][2]) == 1 / 3
    assert parsed[1][5] == "fail" and parsed[2][5] == "pass"
    assert math.isclose(float(parsed[1][4]), 1 - (1 / 3) / 1e-8)
