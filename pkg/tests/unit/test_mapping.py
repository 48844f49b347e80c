"""Tests for map snapshots and their SVG / JSON exports."""

import json
import re

import numpy as np
import pytest

from src.core.mapping import (
    MAP_SCHEMA,
    MapStyle,
    export_json,
    load_snapshot_json,
    render_svg,
    snapshot_layer,
    snapshot_som,
)
from src.core.models import GridCoord, LabeledDataset, MapSnapshot
from src.shared.errors import SnapshotError


def _snapshot(hits, rows=3, cols=4, assignments=None):
    return MapSnapshot(
        layer_index=1,
        grid_rows=rows,
        grid_cols=cols,
        hits={(GridCoord(r, c), k): n for (r, c, k), n in hits.items()},
        instance_assignments=assignments,
    )


class TestSnapshotLayer:
    """Tests for winner-frequency extraction."""

    def test_single_instance(self, make_network):
        """One instance gives one (node, class) entry with count 1."""
        net = make_network()
        single = LabeledDataset(np.array([[0.1, 0.2, 0.3]]), np.array([[0.0, 1.0]]), ["a", "b"])
        snapshot = snapshot_layer(net, single, 1)
        assert list(snapshot.hits.values()) == [1]
        ((coord, class_index),) = snapshot.hits
        assert class_index == 1
        assert snapshot.instance_assignments == [coord]

    def test_hits_conserved(self, make_network, dataset):
        """Total hits equal the dataset size for every layer."""
        net = make_network(grids=[(3, 3), (2, 2)])
        for layer_index in (1, 2):
            snapshot = snapshot_layer(net, dataset, layer_index)
            assert snapshot.total_hits == dataset.num_instances
            assert (snapshot.grid_rows, snapshot.grid_cols) == net.config.layer_grids[
                layer_index - 1
            ]

    @pytest.mark.parametrize("layer_index", [0, 2])
    def test_layer_out_of_range(self, make_network, dataset, layer_index):
        """Layers are numbered from 1 to N."""
        with pytest.raises(SnapshotError):
            snapshot_layer(make_network(), dataset, layer_index)

    def test_som_snapshot(self, make_network, dataset):
        """A stand-alone layer snapshot matches the network's layer-1 BMUs."""
        net = make_network()
        via_network = snapshot_layer(net, dataset, 1)
        via_layer = snapshot_som(net.hidden_layers[0], dataset)
        assert via_network.hits == via_layer.hits


class TestRenderSvg:
    """Tests for the SVG scatter map."""

    def test_deterministic(self):
        """Rendering the same snapshot twice gives identical text."""
        snapshot = _snapshot({(0, 0, 0): 3, (2, 3, 1): 1, (1, 1, 0): 2, (1, 1, 1): 2})
        assert render_svg(snapshot, ["a", "b"]) == render_svg(snapshot, ["a", "b"])

    def test_one_glyph_per_node_class_pair(self):
        """Glyph count equals the number of nonzero (node, class) pairs."""
        snapshot = _snapshot({(0, 0, 0): 3, (2, 3, 1): 1, (1, 1, 0): 2, (1, 1, 1): 2})
        svg = render_svg(snapshot, ["a", "b"])
        assert svg.count('class="glyph"') == 4
        assert svg.count('class="legend-glyph"') == 2
        assert 'data-node="0,1"' not in svg

    def test_area_proportional_to_count(self):
        """Counts 1 and 4 give circle areas in ratio 1:4."""
        snapshot = _snapshot({(0, 0, 0): 1, (2, 2, 0): 4})
        svg = render_svg(snapshot, ["a", "b"])
        radii = {}
        for line in svg.splitlines():
            if line.startswith('<circle class="glyph"'):
                count = int(re.search(r'data-count="(\d+)"', line).group(1))
                radii[count] = float(re.search(r' r="([\d.]+)"', line).group(1))
        assert radii[4] ** 2 / radii[1] ** 2 == pytest.approx(4.0, rel=1e-3)

    def test_shapes_cycle_per_class(self):
        """Classes get circle, square, diamond and triangle glyphs."""
        snapshot = _snapshot({(0, 0, 0): 1, (0, 1, 1): 1, (0, 2, 2): 1, (0, 3, 3): 1})
        svg = render_svg(snapshot, ["a", "b", "c", "d"])
        glyphs = [line for line in svg.splitlines() if 'class="glyph"' in line]
        assert [line.split()[0] for line in glyphs] == ["<circle", "<rect", "<polygon", "<polygon"]

    def test_many_classes_fall_back_to_circles(self):
        """More than eight classes are drawn as coloured circles."""
        hits = {(0, c, c): 1 for c in range(4)}
        hits.update({(1, c, c + 4): 1 for c in range(4)})
        hits[(2, 0, 8)] = 1
        svg = render_svg(_snapshot(hits), [f"k{i}" for i in range(9)])
        glyphs = [line for line in svg.splitlines() if 'class="glyph"' in line]
        assert len(glyphs) == 9
        assert all(line.startswith("<circle") for line in glyphs)
        assert len({re.search(r'fill="([^"]+)"', line).group(1) for line in glyphs}) == 9

    def test_legend_escapes_names(self):
        """Class names appear escaped in the legend."""
        svg = render_svg(_snapshot({(0, 0, 0): 1}), ["a<b", "c&d"])
        assert "a&lt;b" in svg and "c&amp;d" in svg

    def test_grid_geometry(self):
        """Cells are 40 units with the origin at the top left."""
        svg = render_svg(_snapshot({(1, 2, 0): 1}), ["a", "b"], MapStyle(show_grid=False))
        assert 'cx="100.000" cy="60.000"' in svg

    def test_empty_snapshot(self):
        """There is nothing to draw without hits."""
        with pytest.raises(SnapshotError):
            render_svg(_snapshot({}), ["a", "b"])


class TestJsonExport:
    """Tests for the machine-readable snapshot."""

    def test_round_trip(self):
        """export then load restores hits and assignments."""
        assignments = [GridCoord(0, 0), GridCoord(2, 3), GridCoord(0, 0)]
        snapshot = _snapshot({(0, 0, 0): 2, (2, 3, 1): 1}, assignments=assignments)
        restored = load_snapshot_json(export_json(snapshot, ["a", "b"], {"seed": 1}))
        assert restored.hits == snapshot.hits
        assert restored.instance_assignments == assignments
        assert (restored.grid_rows, restored.grid_cols) == (3, 4)

    def test_stable_sorted_keys(self):
        """Keys are sorted so output is byte-stable."""
        text = export_json(_snapshot({(1, 1, 1): 5, (0, 0, 0): 1}), ["a", "b"])
        document = json.loads(text)
        assert text == json.dumps(document, sort_keys=True, indent=2) + "\n"
        assert document["schema"] == MAP_SCHEMA
        assert [(n["row"], n["col"]) for n in document["nodes"]] == [(0, 0), (1, 1)]

    def test_rejects_other_schema(self):
        """Documents of another schema are refused."""
        with pytest.raises(SnapshotError):
            load_snapshot_json(json.dumps({"schema": "other/1"}))

    def test_rejects_out_of_grid_nodes(self):
        """Node coordinates must lie inside the grid."""
        text = export_json(_snapshot({(0, 0, 0): 1}))
        document = json.loads(text)
        document["nodes"][0]["row"] = 7
        with pytest.raises(SnapshotError):
            load_snapshot_json(json.dumps(document))
