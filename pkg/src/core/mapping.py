"""Map snapshots of trained layers and their SVG / JSON renderings.

A snapshot counts, for every node of one layer, how often it was the BMU
for instances of each class. The SVG draws one glyph per (node, class) pair
with an area proportional to that count.
"""

import json
import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple
from xml.sax.saxutils import escape

import numpy as np

from src.shared.errors import SnapshotError
from .models import GridCoord, LabeledDataset, MapSnapshot
from .topology import Network, TopographicLayer, inference_widths, network_forward

logger = logging.getLogger(__name__)

MAP_SCHEMA = "crsom-map/1"
GLYPH_SHAPES = ("circle", "square", "diamond", "triangle")
PALETTE = (
    "#1f77b4",
    "#d62728",
    "#2ca02c",
    "#ff7f0e",
    "#9467bd",
    "#8c564b",
    "#e377c2",
    "#17becf",
)


@dataclass(frozen=True)
class MapStyle:
    """Rendering options; every length is in SVG user units."""

    cell_size: float = 40.0
    max_glyph_fraction: float = 0.5  # largest glyph area / cell area
    stack_offset: float = 5.0
    legend_width: float = 160.0
    show_grid: bool = True
    title: Optional[str] = None


def _collect(
    coords: Sequence[GridCoord], labels: np.ndarray, layer_index: int, rows: int, cols: int
) -> MapSnapshot:
    hits: Dict[Tuple[GridCoord, int], int] = {}
    for coord, label in zip(coords, labels):
        key = (coord, int(label))
        hits[key] = hits.get(key, 0) + 1
    return MapSnapshot(
        layer_index=layer_index,
        grid_rows=rows,
        grid_cols=cols,
        hits=hits,
        instance_assignments=list(coords),
    )


def snapshot_layer(net: Network, dataset: LabeledDataset, layer_index: int) -> MapSnapshot:
    """Winner frequencies of hidden layer ``layer_index`` (1-based) under inference widths."""
    if not 1 <= layer_index <= net.num_hidden_layers:
        raise SnapshotError(
            f"Layer {layer_index} out of range for a network with {net.num_hidden_layers} layers"
        )
    if dataset.num_instances == 0:
        raise SnapshotError("Cannot snapshot a layer over an empty dataset")
    widths = inference_widths(net.config)
    coords = [
        network_forward(net, row, widths)[0][layer_index - 1].bmu for row in dataset.features
    ]
    layer = net.hidden_layers[layer_index - 1]
    return _collect(coords, dataset.labels, layer_index, layer.grid_rows, layer.grid_cols)


def snapshot_som(layer: TopographicLayer, dataset: LabeledDataset) -> MapSnapshot:
    """Winner frequencies of a stand-alone (plain SOM) layer."""
    if dataset.num_instances == 0:
        raise SnapshotError("Cannot snapshot a layer over an empty dataset")
    coords = []
    for row in dataset.features:
        distances = 0.5 * np.sum((layer.reference_vectors - row) ** 2, axis=1)
        coords.append(layer.coord(int(np.argmin(distances))))
    return _collect(coords, dataset.labels, 1, layer.grid_rows, layer.grid_cols)


def _num(value: float) -> str:
    return f"{value:.3f}"


def class_color(class_index: int, num_classes: int) -> str:
    if num_classes <= len(PALETTE):
        return PALETTE[class_index]
    hue = 360.0 * class_index / num_classes
    return f"hsl({hue:.1f},65%,45%)"


def class_shape(class_index: int, num_classes: int) -> str:
    if num_classes > len(PALETTE):
        return "circle"
    return GLYPH_SHAPES[class_index % len(GLYPH_SHAPES)]


def glyph_area(count: int, max_count: int, style: MapStyle) -> float:
    """Area of a glyph for ``count`` wins; the busiest (node, class) gets the maximum."""
    return style.max_glyph_fraction * style.cell_size**2 * count / max_count


def _glyph(
    shape: str,
    cx: float,
    cy: float,
    area: float,
    fill: str,
    extra: str = "",
    css_class: str = "glyph",
) -> str:
    if shape == "circle":
        r = math.sqrt(area / math.pi)
        return (
            f'<circle class="{css_class}" cx="{_num(cx)}" cy="{_num(cy)}" r="{_num(r)}" '
            f'fill="{fill}"{extra}/>'
        )
    if shape == "square":
        side = math.sqrt(area)
        return (
            f'<rect class="{css_class}" x="{_num(cx - side / 2)}" y="{_num(cy - side / 2)}" '
            f'width="{_num(side)}" height="{_num(side)}" fill="{fill}"{extra}/>'
        )
    if shape == "diamond":
        half = math.sqrt(area / 2)
        points = [(cx, cy - half), (cx + half, cy), (cx, cy + half), (cx - half, cy)]
    else:
        side = math.sqrt(4 * area / math.sqrt(3))
        height = side * math.sqrt(3) / 2
        points = [
            (cx, cy - 2 * height / 3),
            (cx + side / 2, cy + height / 3),
            (cx - side / 2, cy + height / 3),
        ]
    coords = " ".join(f"{_num(x)},{_num(y)}" for x, y in points)
    return f'<polygon class="{css_class}" points="{coords}" fill="{fill}"{extra}/>'


class SvgDocument:
    """Line-oriented SVG 1.1 text builder."""

    def __init__(self, width: float, height: float):
        self.width = width
        self.height = height
        self.lines: List[str] = []

    def add(self, element: str) -> None:
        self.lines.append(element)

    def text(self, x: float, y: float, content: str, extra: str = "") -> None:
        self.lines.append(f'<text x="{_num(x)}" y="{_num(y)}"{extra}>{escape(content)}</text>')

    def render(self) -> str:
        header = [
            '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
            '<svg version="1.1" xmlns="http://www.w3.org/2000/svg" '
            f'width="{_num(self.width)}" height="{_num(self.height)}" '
            f'viewBox="0 0 {_num(self.width)} {_num(self.height)}">',
        ]
        return "\n".join(header + self.lines + ["</svg>"]) + "\n"


def render_svg(
    snapshot: MapSnapshot, class_names: Sequence[str], style: Optional[MapStyle] = None
) -> str:
    """Scatter-map SVG of a snapshot with a class legend; pure and byte-stable."""
    style = style or MapStyle()
    nodes = snapshot.node_counts()
    if not nodes:
        raise SnapshotError("Cannot render a snapshot without hits")
    num_classes = len(class_names)
    used = {c for counts in nodes.values() for c in counts}
    if used and max(used) >= num_classes:
        raise SnapshotError(f"Snapshot uses class {max(used)} but only {num_classes} names given")

    cell = style.cell_size
    map_width = snapshot.grid_cols * cell
    map_height = snapshot.grid_rows * cell
    top = 24.0 if style.title else 0.0
    legend_height = 20.0 * num_classes + 20.0
    doc = SvgDocument(map_width + style.legend_width, top + max(map_height, legend_height))
    if style.title:
        doc.text(4.0, 16.0, style.title, ' font-family="sans-serif" font-size="14"')

    doc.add(
        f'<rect x="0" y="{_num(top)}" width="{_num(map_width)}" height="{_num(map_height)}" '
        'fill="#ffffff" stroke="#000000" stroke-width="1"/>'
    )
    if style.show_grid:
        doc.add('<g class="grid" stroke="#dddddd" stroke-width="0.5">')
        for col in range(1, snapshot.grid_cols):
            x = col * cell
            doc.add(
                f'<line x1="{_num(x)}" y1="{_num(top)}" '
                f'x2="{_num(x)}" y2="{_num(top + map_height)}"/>'
            )
        for row in range(1, snapshot.grid_rows):
            y = top + row * cell
            doc.add(f'<line x1="0" y1="{_num(y)}" x2="{_num(map_width)}" y2="{_num(y)}"/>')
        doc.add("</g>")

    max_count = max(count for counts in nodes.values() for count in counts.values())
    doc.add('<g class="glyphs" stroke="#000000" stroke-width="0.5" fill-opacity="0.85">')
    for coord, counts in nodes.items():
        cx = (coord.col + 0.5) * cell
        cy = top + (coord.row + 0.5) * cell
        stacked = len(counts)
        for position, (class_index, count) in enumerate(counts.items()):
            shift = (position - (stacked - 1) / 2) * style.stack_offset
            extra = (
                f' data-node="{coord.row},{coord.col}" '
                f'data-class="{class_index}" data-count="{count}"'
            )
            doc.add(
                _glyph(
                    class_shape(class_index, num_classes),
                    cx + shift,
                    cy + shift,
                    glyph_area(count, max_count, style),
                    class_color(class_index, num_classes),
                    extra,
                )
            )
    doc.add("</g>")

    doc.add('<g class="legend" font-family="sans-serif" font-size="12">')
    legend_x = map_width + 16.0
    legend_area = 0.25 * 16.0**2
    for class_index, name in enumerate(class_names):
        y = top + 20.0 + 20.0 * class_index
        doc.add(
            _glyph(
                class_shape(class_index, num_classes),
                legend_x,
                y,
                legend_area,
                class_color(class_index, num_classes),
                css_class="legend-glyph",
            )
        )
        doc.text(legend_x + 14.0, y + 4.0, name)
    doc.add("</g>")
    return doc.render()


def export_json(
    snapshot: MapSnapshot,
    class_names: Optional[Sequence[str]] = None,
    config: Optional[Dict[str, Any]] = None,
) -> str:
    """Stable-key JSON document of a snapshot (schema ``crsom-map/1``)."""
    nodes = [
        {"row": coord.row, "col": coord.col, "counts": {str(c): n for c, n in counts.items()}}
        for coord, counts in snapshot.node_counts().items()
    ]
    document: Dict[str, Any] = {
        "schema": MAP_SCHEMA,
        "layer_index": snapshot.layer_index,
        "grid": {"rows": snapshot.grid_rows, "cols": snapshot.grid_cols},
        "total_hits": snapshot.total_hits,
        "nodes": nodes,
        "class_names": list(class_names) if class_names is not None else None,
        "assignments": (
            [[coord.row, coord.col] for coord in snapshot.instance_assignments]
            if snapshot.instance_assignments is not None
            else None
        ),
        "config": config,
    }
    return json.dumps(document, sort_keys=True, indent=2) + "\n"


def load_snapshot_json(text: str) -> MapSnapshot:
    """Parse a document written by ``export_json``."""
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise SnapshotError(f"Invalid map JSON: {e}") from e
    if not isinstance(document, dict) or document.get("schema") != MAP_SCHEMA:
        raise SnapshotError(f"Not a {MAP_SCHEMA} document")
    try:
        rows = int(document["grid"]["rows"])
        cols = int(document["grid"]["cols"])
        hits: Dict[Tuple[GridCoord, int], int] = {}
        for node in document["nodes"]:
            coord = GridCoord(int(node["row"]), int(node["col"]))
            if not (0 <= coord.row < rows and 0 <= coord.col < cols):
                raise SnapshotError(f"Node {coord} outside a {rows}x{cols} grid")
            for class_index, count in node["counts"].items():
                hits[(coord, int(class_index))] = int(count)
        assignments = document.get("assignments")
        return MapSnapshot(
            layer_index=int(document["layer_index"]),
            grid_rows=rows,
            grid_cols=cols,
            hits=hits,
            instance_assignments=(
                [GridCoord(int(r), int(c)) for r, c in assignments]
                if assignments is not None
                else None
            ),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise SnapshotError(f"Malformed map JSON: {e}") from e
