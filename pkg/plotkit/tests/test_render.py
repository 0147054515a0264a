"""Rendering structure: series groups, labels, formats, determinism."""
import xml.etree.ElementTree as ET

from plotkit import render_ablation_grid, render_error_curves
from plotkit.csvio import CURVES_COLUMNS


def svg_texts(path):
    root = ET.parse(path).getroot()
    return [" ".join("".join(e.itertext()).split())
            for e in root.iter() if e.tag.endswith("text")]


def svg_series_groups(path):
    root = ET.parse(path).getroot()
    return [e.get("id") for e in root.iter()
            if (e.get("id") or "").startswith("series-")]


def count_paths_in_group(path, gid):
    root = ET.parse(path).getroot()
    for e in root.iter():
        if e.get("id") == gid:
            return sum(1 for sub in e.iter() if sub.tag.endswith("path"))
    return 0


def test_curves_svg_structure(curves_fixture, tmp_path):
    out = render_error_curves(curves_fixture, tmp_path / "curves.svg")
    groups = svg_series_groups(out)
    assert groups == ["series-none", "series-conservative",
                      "series-aggressive", "series-duca"]
    for gid in groups:
        assert count_paths_in_group(out, gid) >= 1
    texts = svg_texts(out)
    assert "denoising step" in texts
    assert "caching error (L2)" in texts
    for policy in ("none", "conservative", "aggressive", "duca"):
        assert policy in texts  # legend entries


def test_curves_flat_zero_line_for_none_only(tmp_path, curves_fixture):
    rows = [",".join(CURVES_COLUMNS)]
    for step in range(4):
        kind = "init" if step == 0 else "fresh"
        rows.append(f"none,0,{step},{kind},0.0,0,0,0")
    src = tmp_path / "none.csv"
    src.write_text("\n".join(rows) + "\n")
    out = render_error_curves(src, tmp_path / "none.svg")
    assert svg_series_groups(out) == ["series-none"]


def test_curves_png_by_extension(curves_fixture, tmp_path):
    out = render_error_curves(curves_fixture, tmp_path / "curves.png")
    data = out.read_bytes()
    assert data[:8] == b"\x89PNG\r\n\x1a\n"


def test_curves_svg_deterministic(curves_fixture, tmp_path):
    a = render_error_curves(curves_fixture, tmp_path / "a.svg").read_bytes()
    b = render_error_curves(curves_fixture, tmp_path / "b.svg").read_bytes()
    assert a == b


def test_grid_svg_structure(grid_fixture, tmp_path):
    out = render_ablation_grid(grid_fixture, tmp_path / "grid.svg")
    groups = svg_series_groups(out)
    assert groups == ["series-R=0.5", "series-R=0.9", "series-N=2", "series-N=3"]
    texts = svg_texts(out)
    assert "cycle length N" in texts
    assert "cache ratio R" in texts


def test_grid_single_cell_no_crash(tmp_path):
    src = tmp_path / "one.csv"
    src.write_text("N,R,flops_speedup,terminal_error\n5,0.9,2.5,1.25\n")
    out = render_ablation_grid(src, tmp_path / "one.svg")
    assert svg_series_groups(out) == ["series-R=0.9", "series-N=5"]


def test_grid_point_counts(tmp_path):
    # 6 cycles x 3 ratios: every cell appears once per panel
    rows = ["N,R,flops_speedup,terminal_error"]
    for n in range(3, 9):
        for r in (0.5, 0.7, 0.9):
            rows.append(f"{n},{r},{2 + n * r},{n * r}")
    src = tmp_path / "grid.csv"
    src.write_text("\n".join(rows) + "\n")
    out = render_ablation_grid(src, tmp_path / "grid.svg")
    groups = svg_series_groups(out)
    assert len(groups) == 3 + 6
    root = ET.parse(out).getroot()
    # each series group draws its line plus one marker <use> per point
    for gid, expected_pts in [("series-R=0.5", 6), ("series-N=3", 3)]:
        node = next(e for e in root.iter() if e.get("id") == gid)
        uses = sum(1 for sub in node.iter() if sub.tag.endswith("use"))
        assert uses == expected_pts
