import csv
import io
import re

import pytest
from hypothesis import given
from hypothesis import strategies as st

from benignlab.tables import Table, csv_text, emit_csv, emit_plot, format_value, loglog_slope, read_csv


def test_empty_table_is_header_only(tmp_path):
    path = emit_csv(Table(["a", "b"]), tmp_path / "e.csv")
    assert path.read_bytes() == b"a,b\r\n"


def test_reemit_is_byte_identical(tmp_path):
    t = Table(["n", "risk", "label"], [(1, 0.1, "x,y"), (2, 1 / 3, 'q"t')])
    a = emit_csv(t, tmp_path / "a.csv").read_bytes()
    b = emit_csv(t, tmp_path / "b.csv").read_bytes()
    assert a == b
    assert b'"x,y"' in a and b'"q""t"' in a


finite = st.floats(allow_nan=False, allow_infinity=False)


@given(st.lists(st.tuples(st.integers(-10 ** 12, 10 ** 12), finite), max_size=20))
def test_round_trip(rows):
    t = Table(["i", "v"], rows)
    text = csv_text(t)
    parsed = list(csv.reader(io.StringIO(text, newline="")))
    assert parsed[0] == ["i", "v"]
    back = [(int(a), float(b)) for a, b in parsed[1:]]
    assert back == rows


def test_read_csv(tmp_path):
    t = Table(["n", "x"], [(10, 0.1), (20, 1e-300)])
    assert read_csv(emit_csv(t, tmp_path / "t.csv")) == t


def test_format_value():
    assert format_value(True) == "1"
    assert format_value(0.1) == "0.10000000000000001"
    assert format_value("s") == "s"


def test_table_errors():
    with pytest.raises(ValueError):
        Table(["a"], [(1, 2)])
    with pytest.raises(KeyError):
        Table(["a"], [(1,)]).column("b")


def test_plot_two_points(tmp_path):
    t = Table(["n", "a", "b"], [(1, 2.0, 3.0), (2, 4.0, 1.0)])
    svg = emit_plot(t, "n", ["a", "b"], tmp_path / "p.svg").read_text()
    lines = re.findall(r'<polyline class="series" data-name="(\w)" points="([^"]+)"', svg)
    assert [name for name, _ in lines] == ["a", "b"]
    assert all(len(pts.split()) == 2 for _, pts in lines)


def test_plot_is_deterministic_with_slope(tmp_path):
    xs = [50, 100, 200, 400]
    t = Table(["n", "risk"], [(x, 3.0 * x ** -0.75) for x in xs])
    a = emit_plot(t, "n", ["risk"], tmp_path / "a.svg", loglog=True, title="risk vs n").read_bytes()
    b = emit_plot(t, "n", ["risk"], tmp_path / "b.svg", loglog=True, title="risk vs n").read_bytes()
    assert a == b
    slope = float(re.search(rb'<desc class="slope" data-name="risk">([^<]+)</desc>', a).group(1))
    assert slope == pytest.approx(-0.75, abs=1e-12)
    assert loglog_slope(xs, [x ** 2 for x in xs]) == pytest.approx(2.0)


def test_plot_errors(tmp_path):
    t = Table(["n", "a"], [(1, 1.0)])
    with pytest.raises(ValueError, match="two rows"):
        emit_plot(t, "n", ["a"], tmp_path / "x.svg")
    t2 = Table(["n", "a"], [(1, 1.0), (2, -1.0)])
    with pytest.raises(KeyError):
        emit_plot(t2, "n", ["zz"], tmp_path / "x.svg")
    with pytest.raises(ValueError, match="positive"):
        emit_plot(t2, "n", ["a"], tmp_path / "x.svg", loglog=True)
