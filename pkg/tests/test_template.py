import math

import numpy as np
import pytest

from minhist.template import (
    BIFURCATION,
    ENDING,
    UNKNOWN,
    Minutia,
    MinutiaTemplate,
    TemplateParseError,
    bifurcation_percentage,
    load_template,
    parse_template,
    rescale_to_500dpi,
    serialize_template,
)


def test_parse_single_ending():
    t = parse_template("dpi 500\n10 20 90 E\n")
    assert t.dpi == 500
    assert len(t) == 1
    m = t.minutiae[0]
    assert (m.x, m.y, m.direction, m.mtype) == (10.0, 20.0, 90.0, ENDING)


def test_parse_reduces_direction_modulo_360():
    t = parse_template("dpi 500\n10 20 450 B\n")
    assert t.minutiae[0].direction == 90.0
    assert t.minutiae[0].mtype == BIFURCATION


def test_parse_empty_minutiae_section_is_valid():
    t = parse_template("dpi 500\nlabel real\n")
    assert len(t) == 0
    assert t.label == "real"


def test_parse_full_header_and_comments():
    text = (
        "# sample template\n"
        "dpi 569\n"
        "mean_ird 10.5\n"
        "var_ird 3.25\n"
        "label synthetic\n"
        "finger 17\n"
        "impression 3\n"
        "1 2 3 U   # trailing comment\n"
    )
    t = parse_template(text)
    assert t.dpi == 569
    assert t.mean_ird == 10.5
    assert t.var_ird == 3.25
    assert t.label == "synthetic"
    assert (t.finger_id, t.impression_id) == ("17", "3")
    assert t.minutiae[0].mtype == UNKNOWN


def test_parse_unknown_header_fields_ignored():
    t = parse_template("dpi 500\nquality 0.9 extra\n10 20 30 E\n")
    assert len(t) == 1


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("10 20 30 E\n", "dpi"),
        ("dpi 500\n10 20 E\n", "line 2"),
        ("dpi 500\n10 20 nan E\n", "line 2"),
        ("dpi 500\n10 20 30 X\n", "line 2"),
        ("dpi 500\n-5 20 30 E\n", "line 2"),
        ("dpi zero\n", "line 1"),
    ],
)
def test_parse_errors(text, fragment):
    with pytest.raises(TemplateParseError, match=fragment):
        parse_template(text)


def test_parse_serialize_round_trip():
    rng = np.random.default_rng(7)
    minutiae = tuple(
        Minutia(
            x=float(rng.uniform(0, 300)),
            y=float(rng.uniform(0, 300)),
            direction=float(rng.uniform(0, 360)),
            mtype=[ENDING, BIFURCATION, UNKNOWN][int(rng.integers(0, 3))],
        )
        for _ in range(20)
    )
    t = MinutiaTemplate(
        minutiae=minutiae, dpi=512, mean_ird=10.24, var_ird=3.7,
        label="real", finger_id="9", impression_id="4",
    )
    assert parse_template(serialize_template(t)) == t


def test_load_template_ids_from_filename(tmp_path):
    path = tmp_path / "17_3.mnt"
    path.write_text("dpi 500\n10 20 30 E\n")
    t = load_template(path)
    assert (t.finger_id, t.impression_id) == ("17", "3")


class TestRescale:
    def test_fvc2002_db2_example(self):
        t = MinutiaTemplate(minutiae=(Minutia(569.0, 0.0, 45.0, ENDING),), dpi=569)
        r = rescale_to_500dpi(t)
        assert r.dpi == 500
        assert r.minutiae[0].x == pytest.approx(500.0)
        assert r.minutiae[0].y == 0.0
        assert r.minutiae[0].direction == 45.0

    def test_identity_at_500dpi(self):
        t = MinutiaTemplate(minutiae=(Minutia(10.0, 20.0, 30.0, ENDING),), dpi=500)
        assert rescale_to_500dpi(t) == t

    def test_fvc2004_db3_mean_ird(self):
        t = MinutiaTemplate(minutiae=(), dpi=512, mean_ird=10.24, var_ird=4.0)
        r = rescale_to_500dpi(t)
        assert r.mean_ird == pytest.approx(10.0)
        assert r.var_ird == pytest.approx(4.0 * (500 / 512) ** 2)

    def test_idempotent(self):
        t = MinutiaTemplate(
            minutiae=(Minutia(100.0, 50.0, 10.0, ENDING),), dpi=569,
            mean_ird=11.0, var_ird=2.0,
        )
        once = rescale_to_500dpi(t)
        assert rescale_to_500dpi(once) == once

    def test_preserves_direction_differences_and_scales_distances(self):
        rng = np.random.default_rng(3)
        minutiae = tuple(
            Minutia(float(rng.uniform(0, 400)), float(rng.uniform(0, 400)),
                    float(rng.uniform(0, 360)), ENDING)
            for _ in range(10)
        )
        t = MinutiaTemplate(minutiae=minutiae, dpi=512)
        r = rescale_to_500dpi(t)
        factor = 500 / 512
        for a, b in zip(t.minutiae, r.minutiae):
            assert b.direction == a.direction
        for i in range(10):
            for j in range(i + 1, 10):
                d_old = math.dist(
                    (t.minutiae[i].x, t.minutiae[i].y), (t.minutiae[j].x, t.minutiae[j].y)
                )
                d_new = math.dist(
                    (r.minutiae[i].x, r.minutiae[i].y), (r.minutiae[j].x, r.minutiae[j].y)
                )
                assert d_new == pytest.approx(d_old * factor, rel=1e-12)

    def test_out_of_range_mean_ird_warns(self):
        t = MinutiaTemplate(minutiae=(), dpi=500, mean_ird=40.0, var_ird=1.0)
        with pytest.warns(UserWarning, match="interridge"):
            rescale_to_500dpi(t)


class TestBifurcationPercentage:
    def _template(self, n_bif, n_end, n_unknown=0):
        minutiae = (
            tuple(Minutia(float(i), 0.0, 0.0, BIFURCATION) for i in range(n_bif))
            + tuple(Minutia(float(i), 1.0, 0.0, ENDING) for i in range(n_end))
            + tuple(Minutia(float(i), 2.0, 0.0, UNKNOWN) for i in range(n_unknown))
        )
        return MinutiaTemplate(minutiae=minutiae, dpi=500)

    def test_direct_ratio(self):
        assert bifurcation_percentage(self._template(3, 7)) == 30.0

    def test_zero_case(self):
        assert bifurcation_percentage(self._template(0, 5)) == 0.0

    def test_all_bifurcations(self):
        assert bifurcation_percentage(self._template(4, 0)) == 100.0

    def test_unknown_types_excluded(self):
        assert bifurcation_percentage(self._template(1, 1, n_unknown=8)) == 50.0

    def test_all_unknown_raises(self):
        with pytest.raises(ValueError, match="no typed minutiae"):
            bifurcation_percentage(self._template(0, 0, n_unknown=3))


def test_direction_normalized_on_construction():
    assert Minutia(0.0, 0.0, -10.0).direction == 350.0
    assert Minutia(0.0, 0.0, 360.0).direction == 0.0


def test_invalid_minutia_rejected():
    with pytest.raises(ValueError):
        Minutia(-1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        Minutia(0.0, float("inf"), 0.0)
    with pytest.raises(ValueError):
        Minutia(0.0, 0.0, float("nan"))
