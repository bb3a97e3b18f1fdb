import csv
import io

import pytest

from equiclass.reproduce import KNOWN_ERRATA, PUBLISHED, TableCell, density_overlay, reproduce, solve_example


@pytest.fixture(scope="module")
def report():
    return reproduce("paper")


def test_every_published_cell_is_compared(report):
    expected = sum(len(rows) for cols in PUBLISHED.values() for rows in cols.values())
    assert len(report.cells) == expected
    assert {c.table for c in report.cells} == {3, 4, 5, 6, 7, 8}


def test_no_mismatches_under_either_profile(report):
    assert report.ok and not report.mismatches()
    strict = reproduce("strict")
    assert strict.ok
    assert [(c.table, c.row, c.column) for c in strict.errata()] == list(KNOWN_ERRATA)


def test_table_three_accuracy_row(report):
    pos = report.cell(3, "Accuracy", "positive_threshold")
    neg = report.cell(3, "Accuracy", "negative_threshold")
    assert (round(pos.computed), round(neg.computed)) == (85, 87)


def test_table_five_cheating_row(report):
    assert round(report.cell(5, "Cheating", "positive_threshold").computed) == 35
    assert round(report.cell(5, "Cheating", "outer_two_cut").computed) == 21


def test_table_eight_inner_two_cut(report):
    cells = [report.cell(8, r, "inner_two_cut").computed for r in ("TP", "FN", "FP", "TN")]
    assert cells == pytest.approx([0, 6, 6, 88], abs=1.0)
    assert cells[0] < 0.5


def test_known_erratum_is_flagged_not_failed(report):
    cell = report.cell(6, "FP", "outer_two_cut")
    assert cell.status("paper") == "erratum"
    assert cell.computed == pytest.approx(24.3, abs=0.05)
    # the published column's other cells pin the remainder
    others = sum(PUBLISHED[6]["outer_two_cut"][r][0] for r in ("TP", "FN", "TN"))
    assert abs(cell.computed - (100 - others)) <= 1.0


def test_profiles_differ_on_rounding():
    cell = TableCell(3, "Accuracy", "x", 85.0, 0, 85.9)
    assert cell.within("paper") and cell.within("strict")
    edge = TableCell(3, "Accuracy", "x", 85.0, 0, 86.2)
    assert edge.within("paper") and not edge.within("strict")
    assert edge.status("strict") == "MISMATCH"
    with pytest.raises(ValueError):
        edge.within("loose")
    with pytest.raises(ValueError):
        reproduce("loose")


def test_two_cut_optimizer_lands_near_published_rules():
    for ex, fam in ((2, "outer_two_cut"), (3, "inner_two_cut")):
        res = solve_example(ex)
        opt, pub = res.optimized[fam], res.rules[fam]
        assert abs(opt.tau_low - pub.tau_low) <= 0.05 and abs(opt.tau_high - pub.tau_high) <= 0.05


def test_csv_and_summary(report):
    rows = list(csv.DictReader(io.StringIO(report.table_csv(5))))
    assert {r["status"] for r in rows} == {"ok"}
    assert {"published", "computed", "compared", "tolerance"} <= set(rows[0])
    text = report.summary()
    assert "mismatches: 0, known errata: 1" in text
    assert "tolerance profile: paper" in text


def test_density_overlay_columns():
    rows = list(csv.reader(io.StringIO(density_overlay(solve_example(3), n=101))))
    assert rows[0] == ["s", "g_0", "g_1", "g_chi", "accept_negative_threshold", "accept_inner_two_cut"]
    assert len(rows) == 102
    assert {float(r[5]) for r in rows[1:]} <= {0.0, 1.0}
