import pytest

from savings_hjb.svg import emit_svg


def write(path, text):
    path.write_text(text)
    return path


def test_single_series(tmp_path):
    src = write(tmp_path / "a.csv", "t,K\n0,1\n1,2\n")
    svg = emit_svg(src, ("t", "K"), tmp_path / "a.svg")
    assert svg.count("<polyline") == 1
    assert svg.startswith("<?xml") and 'version="1.1"' in svg
    assert (tmp_path / "a.svg").read_text() == svg


def test_grouping_and_legend(tmp_path):
    src = write(tmp_path / "b.csv", "t,N0,sigma,N\n0,1.4,0,1\n1,1.4,0,2\n0,3,0,3\n1,3,0,2\n0,3,0.1,3\n")
    svg = emit_svg(src, ("t", "N"), tmp_path / "b.svg", group_by=("N0", "sigma"), title="pop")
    assert svg.count("<polyline") == 3
    assert "N0=3, sigma=0.1" in svg and ">pop<" in svg


def test_deterministic(tmp_path):
    src = write(tmp_path / "c.csv", "x,y\n0,0.1\n0.5,0.7\n2,0.3\n")
    emit_svg(src, ("x", "y"), tmp_path / "1.svg")
    emit_svg(src, ("x", "y"), tmp_path / "2.svg")
    assert (tmp_path / "1.svg").read_bytes() == (tmp_path / "2.svg").read_bytes()


def test_missing_column(tmp_path):
    src = write(tmp_path / "d.csv", "x,y\n0,1\n")
    with pytest.raises(KeyError, match="'z'"):
        emit_svg(src, ("x", "z"), tmp_path / "d.svg")
