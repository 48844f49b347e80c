"""Dataset ingestion and preprocessing.

Sources: comma-separated tables (UCI style), MNIST IDX binaries, the bundled
animals matrix and scikit-learn's Iris. Preprocessing is min-max scaling fit
on training data only, plus an optional constant feature scale.
"""

import csv
import gzip
import logging
import math
import struct
from pathlib import Path
from typing import IO, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.datasets import load_iris
from sklearn.preprocessing import MinMaxScaler

from src.shared.errors import DatasetError
from .models import LabeledDataset, NormalizationParams

logger = logging.getLogger(__name__)

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

ANIMALS_PATH = Path(__file__).resolve().parent.parent / "data" / "animals.tsv"
ANIMAL_CONTEXTS: Dict[str, List[str]] = {
    "carnivore": ["carnivore", "herbivore"],
    "speed": ["fast", "medium", "slow"],
    "avian": ["avian", "non-avian"],
}

DEFAULT_MNIST_TOTAL = 1269


def one_hot(indices: Sequence[int], num_classes: int) -> np.ndarray:
    """Rows of 0/1 with a single 1 at each index."""
    targets = np.zeros((len(indices), num_classes))
    targets[np.arange(len(indices)), np.asarray(indices, dtype=int)] = 1.0
    return targets


def _encode_labels(labels: Sequence[str]) -> Tuple[np.ndarray, List[str]]:
    """Map label strings to class indices in first-appearance order."""
    class_names: List[str] = []
    index: Dict[str, int] = {}
    encoded = []
    for label in labels:
        if label not in index:
            index[label] = len(class_names)
            class_names.append(label)
        encoded.append(index[label])
    return np.asarray(encoded, dtype=int), class_names


def load_csv(
    path: Union[str, Path],
    label_column: Union[str, int] = -1,
    has_header: bool = True,
    delimiter: str = ",",
) -> LabeledDataset:
    """Load a numeric table with one label column.

    ``label_column`` is a header name (requires ``has_header``) or a column
    index, negative indices counting from the end.
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"Data file not found: {path}")

    with open(path, newline="", encoding="utf-8") as handle:
        rows = [row for row in csv.reader(handle, delimiter=delimiter) if row]
    header: Optional[List[str]] = None
    if has_header:
        if not rows:
            raise DatasetError(f"{path}: file is empty")
        header = [name.strip() for name in rows[0]]
        rows = rows[1:]
    if not rows:
        raise DatasetError(f"{path}: no data rows")

    width = len(header) if header is not None else len(rows[0])
    first_line = 2 if has_header else 1
    for offset, row in enumerate(rows):
        if len(row) != width:
            raise DatasetError(
                f"{path}: row {offset + first_line} has {len(row)} fields, expected {width}"
            )

    if isinstance(label_column, str):
        if header is None or label_column not in header:
            raise DatasetError(f"{path}: label column '{label_column}' not found")
        label_index = header.index(label_column)
    else:
        if not -width <= label_column < width:
            raise DatasetError(f"{path}: label column {label_column} out of range")
        label_index = label_column % width

    feature_columns = [c for c in range(width) if c != label_index]
    features = np.empty((len(rows), len(feature_columns)))
    for offset, row in enumerate(rows):
        for j, column in enumerate(feature_columns):
            cell = row[column].strip()
            try:
                features[offset, j] = float(cell)
            except ValueError:
                raise DatasetError(
                    f"{path}: non-numeric value '{cell}' at row {offset + first_line}, "
                    f"column {column + 1}"
                ) from None
            if not math.isfinite(features[offset, j]):
                raise DatasetError(
                    f"{path}: non-finite value at row {offset + first_line}, column {column + 1}"
                )

    labels, class_names = _encode_labels([row[label_index].strip() for row in rows])
    if len(class_names) < 2:
        raise DatasetError(f"{path}: needs at least two classes, found {class_names}")

    dataset = LabeledDataset(
        features=features,
        targets=one_hot(labels, len(class_names)),
        class_names=class_names,
        feature_names=[header[c] for c in feature_columns] if header is not None else None,
    )
    logger.info(
        f"Loaded {path.name}: {dataset.num_instances} instances, "
        f"{dataset.num_features} features, {dataset.num_classes} classes"
    )
    return dataset


def _open_binary(path: Path) -> IO[bytes]:
    if not path.is_file():
        raise DatasetError(f"Data file not found: {path}")
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def read_idx_images(path: Union[str, Path]) -> np.ndarray:
    """Read an IDX image file into a uint8 array of shape (count, rows, cols)."""
    path = Path(path)
    with _open_binary(path) as handle:
        header = handle.read(16)
        if len(header) < 16:
            raise DatasetError(f"{path}: truncated IDX header")
        magic, count, rows, cols = struct.unpack(">IIII", header)
        if magic != IDX_IMAGE_MAGIC:
            raise DatasetError(f"{path}: bad magic number 0x{magic:08x} for an image file")
        payload = handle.read()
    expected = count * rows * cols
    if len(payload) < expected:
        raise DatasetError(
            f"{path}: truncated, expected {expected} pixel bytes, got {len(payload)}"
        )
    return np.frombuffer(payload[:expected], dtype=np.uint8).reshape(count, rows, cols)


def read_idx_labels(path: Union[str, Path]) -> np.ndarray:
    """Read an IDX label file into a uint8 vector."""
    path = Path(path)
    with _open_binary(path) as handle:
        header = handle.read(8)
        if len(header) < 8:
            raise DatasetError(f"{path}: truncated IDX header")
        magic, count = struct.unpack(">II", header)
        if magic != IDX_LABEL_MAGIC:
            raise DatasetError(f"{path}: bad magic number 0x{magic:08x} for a label file")
        payload = handle.read()
    if len(payload) < count:
        raise DatasetError(f"{path}: truncated, expected {count} labels, got {len(payload)}")
    return np.frombuffer(payload[:count], dtype=np.uint8)


def mnist_subset_caps(
    keep_classes: Iterable[int], total: int = DEFAULT_MNIST_TOTAL
) -> Dict[int, int]:
    """Split ``total`` over the classes as evenly as possible, earlier digits first."""
    classes = sorted(set(keep_classes))
    base, extra = divmod(total, len(classes))
    return {digit: base + (1 if i < extra else 0) for i, digit in enumerate(classes)}


def load_idx(
    images_path: Union[str, Path],
    labels_path: Union[str, Path],
    keep_classes: Iterable[int],
    max_per_class: Optional[Union[int, Mapping[int, int]]] = None,
    total: Optional[int] = None,
) -> LabeledDataset:
    """MNIST-style digits restricted to ``keep_classes``, relabelled densely in ascending order.

    Pixels are scaled to [0, 1]. With ``max_per_class`` the first instances of
    each digit in file order are kept. Without it, ``total`` is split over the
    digits by ``mnist_subset_caps``.
    """
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise DatasetError(
            f"Image count ({images.shape[0]}) and label count ({labels.shape[0]}) differ"
        )

    classes = sorted(set(int(c) for c in keep_classes))
    if len(classes) < 2:
        raise DatasetError(f"At least two classes are required, got {classes}")
    if isinstance(max_per_class, Mapping):
        caps = {int(digit): int(cap) for digit, cap in max_per_class.items()}
    elif max_per_class is not None:
        caps = {digit: int(max_per_class) for digit in classes}
    elif total is not None:
        caps = mnist_subset_caps(classes, total)
    else:
        caps = {}

    taken = {digit: 0 for digit in classes}
    selected: List[int] = []
    for position, label in enumerate(labels):
        digit = int(label)
        if digit not in taken:
            continue
        if digit in caps and taken[digit] >= caps[digit]:
            continue
        taken[digit] += 1
        selected.append(position)

    present = [digit for digit in classes if taken[digit] > 0]
    if len(present) < 2:
        raise DatasetError(f"Fewer than two of the requested classes {classes} are present")

    dense = {digit: i for i, digit in enumerate(classes)}
    chosen = np.asarray(selected, dtype=int)
    features = images[chosen].reshape(len(chosen), -1).astype(np.float64) / 255.0
    targets = one_hot([dense[int(labels[i])] for i in chosen], len(classes))
    logger.info(
        f"Loaded IDX subset: {len(chosen)} instances, per class "
        + ", ".join(f"{digit}={taken[digit]}" for digit in classes)
    )
    return LabeledDataset(features=features, targets=targets, class_names=[str(d) for d in classes])


def _read_animals_table(path: Path = ANIMALS_PATH) -> Tuple[List[str], List[List[str]]]:
    with open(path, newline="", encoding="utf-8") as handle:
        lines = [line for line in handle if line.strip() and not line.startswith("#")]
    rows = list(csv.reader(lines, delimiter="\t"))
    return rows[0], rows[1:]


def animals_dataset(context: str) -> LabeledDataset:
    """The bundled 16 x 16 binary animals matrix labelled by ``context``."""
    if context not in ANIMAL_CONTEXTS:
        raise DatasetError(
            f"Unknown animals context '{context}'; choose one of {sorted(ANIMAL_CONTEXTS)}"
        )
    header, rows = _read_animals_table()
    feature_names = [name for name in header[1:] if name not in ANIMAL_CONTEXTS]
    label_column = header.index(context)
    width = len(feature_names)
    features = np.asarray([[float(cell) for cell in row[1 : 1 + width]] for row in rows])
    class_names = ANIMAL_CONTEXTS[context]
    labels = [class_names.index(row[label_column]) for row in rows]
    return LabeledDataset(
        features=features,
        targets=one_hot(labels, len(class_names)),
        class_names=list(class_names),
        feature_names=feature_names,
    )


def animal_names() -> List[str]:
    """Animal name of each row of ``animals_dataset``."""
    _, rows = _read_animals_table()
    return [row[0] for row in rows]


def iris_dataset() -> LabeledDataset:
    """Fisher's Iris (150 x 4, 3 classes) as shipped with scikit-learn."""
    iris = load_iris()
    return LabeledDataset(
        features=np.asarray(iris.data, dtype=np.float64),
        targets=one_hot(iris.target, len(iris.target_names)),
        class_names=[str(name) for name in iris.target_names],
        feature_names=[str(name) for name in iris.feature_names],
    )


def _scaler(params: NormalizationParams) -> MinMaxScaler:
    """A clipping MinMaxScaler restored from stored training statistics."""
    return MinMaxScaler(clip=True).fit(np.vstack([params.minimum, params.maximum]))


def fit_normalizer(dataset: LabeledDataset) -> NormalizationParams:
    """Per-feature min and max of the training data."""
    if dataset.num_instances == 0:
        raise DatasetError("Cannot fit a normalizer on an empty dataset")
    scaler = MinMaxScaler(clip=True).fit(dataset.features)
    return NormalizationParams(minimum=scaler.data_min_, maximum=scaler.data_max_)


def apply_normalizer(params: NormalizationParams, dataset: LabeledDataset) -> LabeledDataset:
    """Scale features to [0, 1] with training statistics; constant features map to 0."""
    if dataset.num_instances == 0:
        raise DatasetError("Cannot normalize an empty dataset")
    if params.minimum.shape != (dataset.num_features,):
        raise DatasetError("Normalizer and dataset feature counts differ")
    scaled = _scaler(params).transform(dataset.features)
    scaled[:, params.maximum == params.minimum] = 0.0
    return dataset.with_features(scaled)


def denormalize(params: NormalizationParams, features: np.ndarray) -> np.ndarray:
    """Inverse of ``apply_normalizer`` for values inside the training range."""
    features = np.asarray(features, dtype=np.float64)
    restored = _scaler(params).inverse_transform(features.reshape(-1, params.minimum.size))
    return restored.reshape(features.shape)


def scale_features(dataset: LabeledDataset, factor: float) -> LabeledDataset:
    """Multiply every feature by ``factor`` (the input bandwidth of layer 1)."""
    if factor == 1.0:
        return dataset
    if not math.isfinite(factor) or factor <= 0:
        raise DatasetError(f"feature_scale must be positive, got {factor}")
    return dataset.with_features(dataset.features * factor)
