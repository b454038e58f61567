"""EnergyPlus CSV output: parsing, time windows, and SVG charts.

Charts are written as plain SVG so their geometry can be read back.  Each data
series lives in a ``<g class="data">`` whose ``transform`` maps data space to
pixels; path coordinates inside it are data values (x in hours from the window
start, y in the column's unit) printed at full float precision.
"""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
import re
import textwrap
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timedelta
from xml.sax.saxutils import escape, quoteattr

from .errors import EmptyWindow, HeaderMissing, NoEnduseColumns, NoWeatherColumns, RaggedRow, UnparseableTimestamp

log = logging.getLogger(__name__)


class Category(str, enum.Enum):
    ENDUSE = "enduse"
    WEATHER = "weather"
    OTHER = "other"


# first segment of a meter name, lower-cased
ENDUSE_NAMES = (
    "heating",
    "cooling",
    "interiorlights",
    "exteriorlights",
    "interiorequipment",
    "exteriorequipment",
    "fans",
    "pumps",
    "heatrejection",
    "humidifier",
    "heatrecovery",
    "watersystems",
    "refrigeration",
    "generators",
    "cogeneration",
)
# meters on these are energy flows inside the system, not purchased energy
NON_FUEL_SUFFIXES = ("energytransfer",)
WEATHER_MARKERS = ("environment:", "site outdoor", "site wind", "site direct solar", "site diffuse solar", "site sky")

HEATING_COLORS = ("#d62728", "#ff9896", "#a50f15")
COOLING_COLORS = ("#1f77b4", "#aec7e8", "#08519c")
PALETTE = ("#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


@dataclass
class Column:
    name: str
    unit: str
    frequency: str
    values: list[float]
    category: Category = Category.OTHER

    @property
    def label(self) -> str:
        return f"{self.name} [{self.unit}]" if self.unit else self.name


@dataclass
class OutputTable:
    timestamps: list[datetime]
    columns: list[Column]

    def __post_init__(self):
        for c in self.columns:
            if len(c.values) != len(self.timestamps):
                raise ValueError(f"column {c.name!r} has {len(c.values)} values for {len(self.timestamps)} timestamps")

    def by_category(self, category: Category) -> list[Column]:
        return [c for c in self.columns if c.category == category]

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)


@dataclass
class Layout:
    width: float = 960.0
    panel_height: float = 160.0
    panel_columns: int = 2
    panel_spacing: float = 24.0
    label_rotation: float = 45.0
    label_font_size: float = 9.0
    tick_font_size: float = 9.0
    title_font_size: float = 14.0
    label_wrap: int = 18


@dataclass
class PlotSpec:
    kind: str
    window: tuple[datetime, datetime] | None = None
    color_map: dict[str, str] = field(default_factory=dict)
    layout: Layout = field(default_factory=Layout)
    title: str | None = None

    def __post_init__(self):
        if self.kind not in ("enduse_stack", "weather_panels"):
            raise ValueError(f"unknown plot kind {self.kind!r}")
        if self.window is not None and not self.window[0] < self.window[1]:
            raise ValueError("window start must precede its end")


# ---------------------------------------------------------------------------
# parsing

_HEADER = re.compile(r"^(?P<name>.*?)\s*(?:\[(?P<unit>[^\]]*)\])?\s*(?:\((?P<freq>[^)]*)\))?\s*$")
_STAMP = re.compile(r"^\s*(\d{1,2})/(\d{1,2})\s+(\d{1,2}):(\d{2}):(\d{2})\s*$")


def parse_header(text: str) -> tuple[str, str, str]:
    """Split ``Key:Name [unit](Frequency)`` into (name, unit, frequency)."""
    m = _HEADER.match(text.strip())
    return m.group("name").strip(), (m.group("unit") or "").strip(), (m.group("freq") or "").strip()


def infer_category(
    name: str,
    enduse_names: tuple[str, ...] = ENDUSE_NAMES,
    weather_markers: tuple[str, ...] = WEATHER_MARKERS,
) -> Category:
    low = name.lower()
    if any(m in low for m in weather_markers):
        return Category.WEATHER
    parts = low.split(":")
    if len(parts) == 2 and parts[0] in enduse_names and parts[1] not in NON_FUEL_SUFFIXES:
        return Category.ENDUSE
    return Category.OTHER


def _cell(text: str) -> float:
    text = text.strip()
    return float(text) if text else math.nan


def parse_output_csv(
    text: str,
    year: int | None = None,
    strict: bool = False,
    enduse_names: tuple[str, ...] = ENDUSE_NAMES,
    weather_markers: tuple[str, ...] = WEATHER_MARKERS,
) -> OutputTable:
    """Parse EnergyPlus CSV output.

    Timestamps carry no year; ``year`` defaults to 2001, or 2000 when the file
    has a 02/29 row, and rolls over when the month goes backwards.  ``24:00``
    becomes 00:00 of the next day.  ReadVarsESO drops trailing empty cells, so
    short rows are padded with NaN unless ``strict``; long rows always raise.
    """
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or not rows[0] or rows[0][0].strip().lower() != "date/time":
        raise HeaderMissing("first column header must be Date/Time")
    header = [h.strip() for h in rows[0]]
    while header and not header[-1]:
        header.pop()
    width = len(header)
    body = [(n, r) for n, r in enumerate(rows[1:], start=2) if any(c.strip() for c in r)]
    if year is None:
        leap_day = any((m := _STAMP.match(r[0])) and (int(m.group(1)), int(m.group(2))) == (2, 29) for _, r in body)
        year = 2000 if leap_day else 2001
    stamps: list[datetime] = []
    values: list[list[float]] = [[] for _ in range(width - 1)]
    last_month = 0
    for row_no, row in body:
        cells = list(row)
        while len(cells) > width and not cells[-1].strip():
            cells.pop()
        if len(cells) > width or (strict and len(cells) < width):
            raise RaggedRow(row_no, width, len(cells))
        m = _STAMP.match(cells[0])
        if not m:
            raise UnparseableTimestamp(row_no, cells[0])
        month, day, hour, minute, second = (int(g) for g in m.groups())
        if month < last_month:
            year += 1
        last_month = month
        try:
            if hour == 24:
                ts = datetime(year, month, day, 0, minute, second) + timedelta(days=1)
            else:
                ts = datetime(year, month, day, hour, minute, second)
        except ValueError as exc:
            raise UnparseableTimestamp(row_no, cells[0]) from exc
        stamps.append(ts)
        cells += [""] * (width - len(cells))
        for i, cell in enumerate(cells[1:]):
            try:
                values[i].append(_cell(cell))
            except ValueError as exc:
                raise ValueError(f"row {row_no}, column {header[i + 1]!r}: not a number: {cell!r}") from exc
    columns = []
    for h, vals in zip(header[1:], values):
        name, unit, freq = parse_header(h)
        columns.append(Column(name, unit, freq, vals, infer_category(name, enduse_names, weather_markers)))
    return OutputTable(stamps, columns)


# ---------------------------------------------------------------------------
# windows


def day_window(start: date, end: date, step: timedelta = timedelta(hours=1)) -> tuple[datetime, datetime]:
    """Timestamps covering whole days ``start`` up to midnight beginning ``end``.

    EnergyPlus stamps each interval with its end, so the first stamp of a day is
    00:00 plus one step and the last is the following midnight.
    """
    return datetime.combine(start, datetime.min.time()) + step, datetime.combine(end, datetime.min.time())


def _step(table: OutputTable) -> timedelta:
    if len(table.timestamps) < 2:
        return timedelta(hours=1)
    return min(b - a for a, b in zip(table.timestamps, table.timestamps[1:]) if b > a)


def select_window(table: OutputTable, start: datetime | date, end: datetime | date) -> OutputTable:
    """Rows with ``start <= t <= end``.  Plain dates go through ``day_window``."""
    if not isinstance(start, datetime) and not isinstance(end, datetime):
        start, end = day_window(start, end, _step(table))
    elif not isinstance(start, datetime) or not isinstance(end, datetime):
        raise TypeError("start and end must both be dates or both be datetimes")
    if not start < end:
        raise ValueError("window start must precede its end")
    keep = [i for i, t in enumerate(table.timestamps) if start <= t <= end]
    if not keep:
        raise EmptyWindow(f"no rows between {start} and {end}")
    return OutputTable(
        [table.timestamps[i] for i in keep],
        [replace(c, values=[c.values[i] for i in keep]) for c in table.columns],
    )


# ---------------------------------------------------------------------------
# svg helpers


def _f(x: float) -> str:
    """Pixel coordinates: two decimals are plenty."""
    s = f"{x:.2f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _d(x: float) -> str:
    """Data coordinates: shortest repr that round-trips."""
    return repr(float(x))


def nice_step(span: float, target: int = 5) -> float:
    if span <= 0:
        return 1.0
    raw = span / target
    mag = 10 ** math.floor(math.log10(raw))
    for m in (1, 2, 2.5, 5, 10):
        if raw <= m * mag:
            return m * mag
    return 10 * mag


def nice_range(lo: float, hi: float) -> tuple[float, float, float]:
    if hi <= lo:
        lo, hi = lo - 1.0, hi + 1.0
    step = nice_step(hi - lo)
    return math.floor(lo / step) * step, math.ceil(hi / step) * step, step


def _ticks(lo: float, hi: float, step: float) -> list[float]:
    n = int(round((hi - lo) / step))
    return [lo + i * step for i in range(n + 1)]


def _tick_text(v: float, step: float) -> str:
    if v != 0 and (abs(v) >= 1e5 or abs(v) < 1e-3):
        return f"{v:.3g}"
    decimals = max(0, -int(math.floor(math.log10(step)))) if step < 1 else 0
    return f"{v:.{decimals}f}"


def text_box(text: str, font_size: float, x: float, y: float, rotation: float = 0.0, anchor: str = "end") -> tuple[float, float, float, float]:
    """Approximate bounding box (x0, y0, x1, y1) of a possibly multi-line, rotated label.

    Glyphs are taken as 0.6 em wide and lines 1.2 em apart.  ``rotation`` is in
    degrees, clockwise as in SVG, about (x, y).  The anchor sets where (x, y)
    sits horizontally.  The text block is centred on y.
    """
    lines = text.split("\n")
    w = max(len(s) for s in lines) * 0.6 * font_size
    h = len(lines) * 1.2 * font_size
    left = {"start": 0.0, "middle": -w / 2, "end": -w}[anchor]
    corners = [(left, -h / 2), (left + w, -h / 2), (left, h / 2), (left + w, h / 2)]
    a = math.radians(rotation)
    pts = [(x + cx * math.cos(a) - cy * math.sin(a), y + cx * math.sin(a) + cy * math.cos(a)) for cx, cy in corners]
    xs, ys = [p[0] for p in pts], [p[1] for p in pts]
    return min(xs), min(ys), max(xs), max(ys)


def _text(x, y, s, size, anchor="middle", cls=None, rotation=None) -> str:
    attrs = [f'x="{_f(x)}"', f'y="{_f(y)}"', f'font-size="{_f(size)}"', f'text-anchor="{anchor}"']
    if cls:
        attrs.insert(0, f'class="{cls}"')
    if rotation:
        attrs.append(f'transform="rotate({_f(rotation)} {_f(x)} {_f(y)})"')
    lines = s.split("\n")
    if len(lines) == 1:
        return f"<text {' '.join(attrs)}>{escape(s)}</text>"
    first = -(len(lines) - 1) * 0.6
    spans = "".join(
        f'<tspan x="{_f(x)}" dy="{_f(first if i == 0 else 1.2)}em">{escape(line)}</tspan>' for i, line in enumerate(lines)
    )
    return f"<text {' '.join(attrs)} dominant-baseline=\"middle\">{spans}</text>"


def _data_transform(px0, px1, py0, py1, x_span, ylo, yhi) -> str:
    """Matrix mapping data (x in [0, x_span], y in [ylo, yhi]) onto the pixel box."""
    a = (px1 - px0) / x_span
    d = -(py1 - py0) / (yhi - ylo)
    f = py1 - d * ylo
    return f"matrix({_d(a)} 0 0 {_d(d)} {_d(px0)} {_d(f)})"


def _hours(stamps: list[datetime]) -> list[float]:
    t0 = stamps[0]
    return [(t - t0).total_seconds() / 3600.0 for t in stamps]


def _x_axis(parts, stamps, px0, px1, y, font):
    hours = _hours(stamps)
    span = hours[-1] or 1.0
    days = sorted({datetime.combine(t.date(), datetime.min.time()) for t in stamps if t >= stamps[0]})
    step = max(1, math.ceil(len(days) / 8))
    parts.append(f'<line class="axis" x1="{_f(px0)}" y1="{_f(y)}" x2="{_f(px1)}" y2="{_f(y)}" stroke="#000"/>')
    for d in days[::step]:
        h = (d - stamps[0]).total_seconds() / 3600.0
        if 0 <= h <= span:
            x = px0 + (px1 - px0) * h / span
            parts.append(f'<line x1="{_f(x)}" y1="{_f(y)}" x2="{_f(x)}" y2="{_f(y + 4)}" stroke="#000"/>')
            parts.append(_text(x, y + 6 + font, d.strftime("%m/%d"), font, cls="xtick"))


def _y_axis(parts, ticks, step, ylo, yhi, px0, py0, py1, font):
    parts.append(f'<line class="axis" x1="{_f(px0)}" y1="{_f(py0)}" x2="{_f(px0)}" y2="{_f(py1)}" stroke="#000"/>')
    for v in ticks:
        y = py1 - (py1 - py0) * (v - ylo) / (yhi - ylo)
        parts.append(f'<line x1="{_f(px0 - 4)}" y1="{_f(y)}" x2="{_f(px0)}" y2="{_f(y)}" stroke="#000"/>')
        parts.append(_text(px0 - 6, y + font * 0.35, _tick_text(v, step), font, anchor="end", cls="ytick"))


def _svg(width, height, title, body) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(width)}" height="{_f(height)}" '
        f'viewBox="0 0 {_f(width)} {_f(height)}" font-family="sans-serif">'
    )
    return "\n".join([head, f"<title>{escape(title)}</title>", '<rect width="100%" height="100%" fill="#fff"/>', *body, "</svg>"]) + "\n"


def _window_title(stamps: list[datetime]) -> str:
    return f"{stamps[0]:%b %d %H:%M} to {stamps[-1]:%b %d %H:%M}"


def _windowed(table: OutputTable, spec: PlotSpec) -> OutputTable:
    return select_window(table, *spec.window) if spec.window is not None else table


# ---------------------------------------------------------------------------
# end-use stack


def enduse_colors(columns: list[Column], overrides: dict[str, str] | None = None) -> dict[str, str]:
    """Heating in reds, cooling in blues, everything else from PALETTE in order."""
    overrides = overrides or {}
    out, heat, cool, other = {}, 0, 0, 0
    for c in columns:
        kind = c.name.split(":")[0].lower()
        if c.name in overrides:
            out[c.name] = overrides[c.name]
        elif kind == "heating":
            out[c.name] = HEATING_COLORS[heat % len(HEATING_COLORS)]
            heat += 1
        elif kind == "cooling":
            out[c.name] = COOLING_COLORS[cool % len(COOLING_COLORS)]
            cool += 1
        else:
            out[c.name] = PALETTE[other % len(PALETTE)]
            other += 1
    return out


def stack_bounds(columns: list[Column]) -> list[tuple[list[float], list[float]]]:
    """(bottom, top) per band; each top is the running sum of the bands so far."""
    n = len(columns[0].values)
    running = [0.0] * n
    out = []
    for c in columns:
        top = [r + v for r, v in zip(running, c.values)]
        out.append((running, top))
        running = top
    return out


def enduse_stack_plot(table: OutputTable, spec: PlotSpec | None = None) -> str:
    spec = spec or PlotSpec("enduse_stack")
    lay = spec.layout
    tab = _windowed(table, spec)
    columns = []
    for c in tab.by_category(Category.ENDUSE):
        if all(math.isfinite(v) for v in c.values):
            columns.append(c)
        else:
            log.warning("skipping %s: missing values in the window", c.name)
    if not columns:
        raise NoEnduseColumns("no end-use columns with values in the window")
    colors = enduse_colors(columns, spec.color_map)
    bounds = stack_bounds(columns)
    hours = _hours(tab.timestamps)
    x_span = hours[-1] or 1.0
    ylo, yhi, ystep = nice_range(0.0, max(max(bounds[-1][1]), 0.0) or 1.0)
    units = sorted({c.unit for c in columns})
    unit = units[0] if len(units) == 1 else "mixed units"
    title = spec.title or f"End-use energy, {_window_title(tab.timestamps)}"

    legend_w = 0.6 * lay.tick_font_size * max(len(c.name) for c in columns) + 36
    px0, py0 = 90.0, 50.0
    px1 = lay.width - legend_w - 20
    py1 = py0 + 360.0
    height = py1 + 60
    parts = [_text(lay.width / 2, 28, title, lay.title_font_size, cls="title")]
    tf = _data_transform(px0, px1, py0, py1, x_span, ylo, yhi)
    parts.append(f'<g class="data" transform="{tf}">')
    for c, (bottom, top) in zip(columns, bounds):
        pts = [f"{_d(x)},{_d(y)}" for x, y in zip(hours, top)]
        pts += [f"{_d(x)},{_d(y)}" for x, y in zip(reversed(hours), reversed(bottom))]
        parts.append(
            f'<path class="band" data-column={quoteattr(c.name)} fill="{colors[c.name]}" stroke="none" '
            f'd="M{" L".join(pts)} Z"/>'
        )
    parts.append("</g>")
    _x_axis(parts, tab.timestamps, px0, px1, py1, lay.tick_font_size)
    _y_axis(parts, _ticks(ylo, yhi, ystep), ystep, ylo, yhi, px0, py0, py1, lay.tick_font_size)
    parts.append(_text((px0 + px1) / 2, height - 14, "Date/Time (hour ending)", lay.label_font_size + 2, cls="xlabel"))
    parts.append(_text(24, (py0 + py1) / 2, f"Energy [{unit}]", lay.label_font_size + 2, cls="ylabel", rotation=-90))
    parts.append('<g class="legend">')
    lx = px1 + 20
    for i, c in enumerate(reversed(columns)):
        y = py0 + 8 + i * (lay.tick_font_size + 8)
        parts.append(f'<rect x="{_f(lx)}" y="{_f(y - 8)}" width="12" height="10" fill="{colors[c.name]}"/>')
        parts.append(_text(lx + 18, y, c.name, lay.tick_font_size, anchor="start", cls="legend-label"))
    parts.append("</g>")
    return _svg(lay.width, height, title, parts)


# ---------------------------------------------------------------------------
# weather panels


def _short_name(name: str) -> str:
    return name.split(":", 1)[1] if name.lower().startswith("environment:") else name


def weather_panels(table: OutputTable, spec: PlotSpec | None = None) -> str:
    """One line chart per weather column, laid out in a grid.

    Y-axis labels are wrapped, rotated by ``layout.label_rotation`` and set in
    ``layout.label_font_size``.  The left margin and panel height grow until
    each label's box fits inside its own grid cell, clear of the plot frame.
    """
    spec = spec or PlotSpec("weather_panels")
    lay = spec.layout
    tab = _windowed(table, spec)
    columns = [c for c in tab.by_category(Category.WEATHER) if all(math.isfinite(v) for v in c.values)]
    if not columns:
        raise NoWeatherColumns("no weather columns with values in the window")
    ncols = max(1, min(lay.panel_columns, len(columns)))
    nrows = math.ceil(len(columns) / ncols)
    labels = ["\n".join(textwrap.wrap(f"{_short_name(c.name)} [{c.unit}]", lay.label_wrap)) for c in columns]
    boxes = [text_box(s, lay.label_font_size, 0.0, 0.0, -lay.label_rotation, "middle") for s in labels]
    label_w = max(b[2] - b[0] for b in boxes)
    label_h = max(b[3] - b[1] for b in boxes)
    tick_w = 0.6 * lay.tick_font_size * 9
    pad = 6.0
    left = pad + label_w + pad + tick_w + 6
    top_pad = lay.label_font_size + 14
    bottom_pad = lay.tick_font_size + 18
    inner_h = max(lay.panel_height - top_pad - bottom_pad, label_h + 2 * pad)
    cell_h = top_pad + inner_h + bottom_pad
    title_h = 44.0
    cell_w = (lay.width - (ncols - 1) * lay.panel_spacing) / ncols
    height = title_h + nrows * cell_h + (nrows - 1) * lay.panel_spacing + 10
    hours = _hours(tab.timestamps)
    x_span = hours[-1] or 1.0
    title = spec.title or f"Weather variables, {_window_title(tab.timestamps)}"
    parts = [_text(lay.width / 2, 28, title, lay.title_font_size, cls="title")]
    for i, (c, label) in enumerate(zip(columns, labels)):
        r, k = divmod(i, ncols)
        cx = k * (cell_w + lay.panel_spacing)
        cy = title_h + r * (cell_h + lay.panel_spacing)
        px0, px1 = cx + left, cx + cell_w - 20
        py0, py1 = cy + top_pad, cy + top_pad + inner_h
        ylo, yhi, ystep = nice_range(min(c.values), max(c.values))
        parts.append(
            f'<g class="panel" data-column={quoteattr(c.name)} '
            f'data-cell="{_f(cx)} {_f(cy)} {_f(cell_w)} {_f(cell_h)}">'
        )
        parts.append(
            f'<rect class="frame" x="{_f(px0)}" y="{_f(py0)}" width="{_f(px1 - px0)}" height="{_f(py1 - py0)}" '
            f'fill="none" stroke="#ccc"/>'
        )
        parts.append(_text((px0 + px1) / 2, cy + lay.label_font_size + 4, _short_name(c.name), lay.label_font_size + 1, cls="panel-title"))
        tf = _data_transform(px0, px1, py0, py1, x_span, ylo, yhi)
        pts = " L".join(f"{_d(x)},{_d(y)}" for x, y in zip(hours, c.values))
        parts.append(f'<g class="data" transform="{tf}">')
        parts.append(
            f'<path class="series" fill="none" stroke="#1f3b73" stroke-width="1" '
            f'vector-effect="non-scaling-stroke" d="M{pts}"/>'
        )
        parts.append("</g>")
        _x_axis(parts, tab.timestamps, px0, px1, py1, lay.tick_font_size)
        _y_axis(parts, _ticks(ylo, yhi, ystep), ystep, ylo, yhi, px0, py0, py1, lay.tick_font_size)
        lx = cx + pad + label_w / 2
        parts.append(_text(lx, (py0 + py1) / 2, label, lay.label_font_size, cls="ylabel", rotation=-lay.label_rotation))
        parts.append("</g>")
    return _svg(lay.width, height, title, parts)
