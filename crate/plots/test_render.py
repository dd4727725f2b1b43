import hashlib
from pathlib import Path

import pytest

from render import PlotError, PlotSpec, annotations, build_figure, main, read_rows, render

GOLDEN = Path(__file__).parent / "testdata" / "two_components.csv"
OPTIMA = Path(__file__).parent / "testdata" / "optima.csv"


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.mark.parametrize("suffix", [".png", ".svg"])
def test_output_is_deterministic(tmp_path, suffix):
    before = GOLDEN.read_bytes()
    a = render(PlotSpec(GOLDEN, ["pg_2", "qg_2"], tmp_path / f"a{suffix}", optima=OPTIMA))
    b = render(PlotSpec(GOLDEN, ["pg_2", "qg_2"], tmp_path / f"b{suffix}", optima=OPTIMA))
    assert a.stat().st_size > 0
    assert digest(a) == digest(b)
    assert GOLDEN.read_bytes() == before


def test_three_axes(tmp_path):
    out = render(PlotSpec(GOLDEN, ["pg_2", "qg_2", "vm_2"], tmp_path / "c.png"))
    assert out.exists()


def test_missing_column_is_an_error(tmp_path):
    with pytest.raises(PlotError, match="qg_9"):
        render(PlotSpec(GOLDEN, ["pg_2", "qg_9"], tmp_path / "x.png"))
    assert main([str(GOLDEN), "--axes", "pg_2,qg_9", "-o", str(tmp_path / "x.png")]) == 2
    assert not (tmp_path / "x.png").exists()


@pytest.mark.parametrize("contents", ["", "vm_1,pg_2,qg_2,cost,binding,component\n"])
def test_empty_csv_renders_empty_axes(tmp_path, contents):
    src = tmp_path / "empty.csv"
    src.write_text(contents)
    out = tmp_path / "empty.png"
    assert main([str(src), "--axes", "pg_2,qg_2", "-o", str(out)]) == 0
    assert out.stat().st_size > 0


def test_annotations_follow_components():
    rows = read_rows(GOLDEN, ["pg_2", "qg_2"])
    notes = annotations(rows, ["pg_2", "qg_2"])
    assert len(notes) == 2
    (left, _), (right, _) = sorted(notes)
    assert left[0] < 60 < right[0]
    assert all("Qmin" in text for _, text in notes)


def test_colors_follow_cost(tmp_path):
    import matplotlib.pyplot as plt

    src = tmp_path / "ramp.csv"
    lines = ["pg_2,qg_2,cost,binding,component"] + [f"{p},0,{10 * p},,1" for p in range(10)]
    src.write_text("\n".join(lines) + "\n")
    fig = build_figure(PlotSpec(src, ["pg_2", "qg_2"], tmp_path / "unused.png"))
    points = fig.axes[0].collections[0]
    xs = [x for x, _ in points.get_offsets()]
    fig.canvas.draw()
    colors = points.get_facecolors()
    plt.close(fig)
    # viridis brightens monotonically
    lum = [0.2126 * c[0] + 0.7152 * c[1] + 0.0722 * c[2] for _, c in sorted(zip(xs, colors), key=lambda t: t[0])]
    assert lum == sorted(lum) and lum[0] < lum[-1]
