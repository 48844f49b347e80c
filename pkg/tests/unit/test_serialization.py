"""Tests for saving and loading model files."""

import json

import numpy as np
import pytest

from src.core.datasets import fit_normalizer
from src.core.evaluation import predict_all
from src.core.learning import fit
from src.core.serialization import MODEL_SCHEMA, load_model, model_from_dict, save_model
from src.shared.errors import ModelFormatError


@pytest.fixture
def trained(make_network, dataset):
    net = make_network(grids=[(3, 3), (2, 3)], t_end=5)
    fit(net, dataset)
    return net


class TestSaveLoad:
    """Round trips through the JSON model file."""

    def test_parameters_restored_bitwise(self, trained, dataset, tmp_path):
        """Every weight comes back bit for bit and predictions agree."""
        loaded = load_model(save_model(trained, tmp_path / "model.json")).network
        for original, restored in zip(trained.hidden_layers, loaded.hidden_layers):
            assert np.array_equal(original.reference_vectors, restored.reference_vectors)
            assert restored.grid_rows == original.grid_rows
            assert restored.grid_cols == original.grid_cols
        assert np.array_equal(trained.output_layer.weights, loaded.output_layer.weights)
        assert np.array_equal(trained.output_layer.biases, loaded.output_layer.biases)
        assert loaded.config == trained.config
        assert np.array_equal(
            predict_all(trained, dataset.features), predict_all(loaded, dataset.features)
        )

    def test_byte_identical_files(self, trained, tmp_path):
        """Saving the same network twice writes the same bytes."""
        first = save_model(trained, tmp_path / "a.json").read_bytes()
        second = save_model(trained, tmp_path / "b.json").read_bytes()
        assert first == second

    def test_preprocessing_round_trip(self, trained, dataset, tmp_path):
        """Normalizer bounds and feature scale are stored with the model."""
        normalizer = fit_normalizer(dataset)
        path = save_model(trained, tmp_path / "model.json", normalizer, feature_scale=0.1)
        saved = load_model(path)
        assert np.array_equal(saved.normalizer.minimum, normalizer.minimum)
        assert np.array_equal(saved.normalizer.maximum, normalizer.maximum)
        assert saved.feature_scale == 0.1

    def test_document_layout(self, trained, tmp_path):
        """The file records schema, seed and one entry per hidden layer."""
        document = json.loads(save_model(trained, tmp_path / "model.json").read_text())
        assert document["schema"] == MODEL_SCHEMA
        assert document["seed"] == trained.config.rng_seed
        assert [(e["rows"], e["cols"]) for e in document["hidden_layers"]] == [(3, 3), (2, 3)]
        assert document["preprocessing"] == {"normalizer": None, "feature_scale": 1.0}


class TestLoadErrors:
    """Failures surface as ModelFormatError."""

    def test_missing_file(self, tmp_path):
        """A missing path names the file."""
        with pytest.raises(ModelFormatError, match="not found"):
            load_model(tmp_path / "absent.json")

    def test_invalid_json(self, tmp_path):
        """Unparseable text is rejected."""
        path = tmp_path / "model.json"
        path.write_text("{not json")
        with pytest.raises(ModelFormatError):
            load_model(path)

    def test_wrong_schema(self):
        """Other schemas are refused."""
        with pytest.raises(ModelFormatError):
            model_from_dict({"schema": "crsom-model/0"})

    def test_missing_section(self, trained, tmp_path):
        """A document without output weights is malformed."""
        document = json.loads(save_model(trained, tmp_path / "model.json").read_text())
        del document["output_layer"]
        with pytest.raises(ModelFormatError):
            model_from_dict(document)
