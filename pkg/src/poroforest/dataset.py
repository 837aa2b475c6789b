"""Concrete-mix dataset handling: CSV I/O, validation, summaries, stratified splits.

Each observation is one hardened-concrete specimen: mixture proportions,
curing regime, and measured porosity. A 34-row reference corpus ships with
the package (``load_corpus``).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

from .errors import DataError

CURING_CONDITIONS = ("air", "water")

#: CSV column order; ``training`` is optional.
CSV_COLUMNS = (
    "mix_id",
    "w_b",
    "binder",
    "fly_ash",
    "ggbs",
    "sp",
    "ca_fa",
    "curing_condition",
    "curing_days",
    "porosity",
    "training",
)


@dataclass(frozen=True)
class FeatureSpec:
    """One predictor: name, kind ('numeric' | 'categorical'), unit, categories."""

    name: str
    kind: str
    unit: str = ""
    categories: tuple[str, ...] = ()


#: Predictor schema in model-input order. Categorical features are encoded
#: by category index (position in ``categories``).
FEATURES = (
    FeatureSpec("w_b", "numeric", "water/binder weight ratio"),
    FeatureSpec("binder", "numeric", "kg/m^3"),
    FeatureSpec("fly_ash", "numeric", "% of binder"),
    FeatureSpec("ggbs", "numeric", "% of binder"),
    FeatureSpec("sp", "numeric", "% of binder"),
    FeatureSpec("ca_fa", "numeric", "coarse/fine aggregate ratio"),
    FeatureSpec("curing_condition", "categorical", categories=CURING_CONDITIONS),
    FeatureSpec("curing_days", "numeric", "days"),
)

FEATURE_NAMES = tuple(spec.name for spec in FEATURES)
CATEGORICAL_FLAGS = tuple(spec.kind == "categorical" for spec in FEATURES)
N_FEATURES = len(FEATURES)


@dataclass(frozen=True)
class MixRecord:
    """A single specimen: mixture design, curing, and measured porosity (%)."""

    mix_id: str
    w_b: float
    binder: float
    fly_ash: float
    ggbs: float
    sp: float
    ca_fa: float
    curing_condition: str
    curing_days: int
    porosity: float
    training: bool | None = None

    def __post_init__(self):
        if self.w_b <= 0:
            raise DataError(f"w_b must be > 0, got {self.w_b}")
        if self.binder <= 0:
            raise DataError(f"binder must be > 0, got {self.binder}")
        if not 0 <= self.fly_ash <= 100:
            raise DataError(f"fly_ash must be in [0, 100], got {self.fly_ash}")
        if not 0 <= self.ggbs <= 100:
            raise DataError(f"ggbs must be in [0, 100], got {self.ggbs}")
        if self.fly_ash + self.ggbs >= 100:
            raise DataError(
                f"fly_ash + ggbs must be < 100, got {self.fly_ash + self.ggbs}"
            )
        if self.sp < 0:
            raise DataError(f"sp must be >= 0, got {self.sp}")
        if self.ca_fa <= 0:
            raise DataError(f"ca_fa must be > 0, got {self.ca_fa}")
        if self.curing_condition not in CURING_CONDITIONS:
            raise DataError(
                f"curing_condition must be one of {CURING_CONDITIONS}, "
                f"got {self.curing_condition!r}"
            )
        if not isinstance(self.curing_days, int) or isinstance(self.curing_days, bool):
            raise DataError(f"curing_days must be an integer, got {self.curing_days!r}")
        if self.curing_days < 1:
            raise DataError(f"curing_days must be >= 1, got {self.curing_days}")
        if self.porosity <= 0:
            raise DataError(f"porosity must be > 0, got {self.porosity}")

    def features(self) -> np.ndarray:
        """Encode the predictors as a float vector in schema order."""
        return np.array(
            [
                self.w_b,
                self.binder,
                self.fly_ash,
                self.ggbs,
                self.sp,
                self.ca_fa,
                float(CURING_CONDITIONS.index(self.curing_condition)),
                float(self.curing_days),
            ],
            dtype=np.float64,
        )


def concrete_type(record: MixRecord) -> str:
    """Classify a mix as 'fly_ash', 'ggbs', or 'opc' by its SCM content."""
    if record.fly_ash > 0:
        return "fly_ash"
    if record.ggbs > 0:
        return "ggbs"
    return "opc"


@dataclass(frozen=True)
class Dataset:
    """An ordered, immutable collection of MixRecords plus the feature schema."""

    records: tuple[MixRecord, ...]
    schema: tuple[FeatureSpec, ...] = FEATURES

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, index: int) -> MixRecord:
        return self.records[index]

    def design_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (X, y): encoded predictors (n, p) and porosity targets (n,)."""
        if not self.records:
            return np.empty((0, N_FEATURES)), np.empty(0)
        X = np.stack([r.features() for r in self.records])
        y = np.array([r.porosity for r in self.records], dtype=np.float64)
        return X, y

    def subset(self, indices) -> "Dataset":
        """Dataset restricted to the given record indices, order preserved."""
        return Dataset(tuple(self.records[i] for i in indices), self.schema)

    def training_subset(self) -> "Dataset":
        """Records flagged training=True; the full dataset if nothing is flagged."""
        flagged = [r for r in self.records if r.training is not None]
        if not flagged:
            return self
        return Dataset(
            tuple(r for r in self.records if r.training), self.schema
        )

    def test_subset(self) -> "Dataset":
        """Records flagged training=False; empty if nothing is flagged."""
        return Dataset(
            tuple(r for r in self.records if r.training is False), self.schema
        )


@dataclass(frozen=True)
class ColumnStats:
    """Range and moments of one continuous column."""

    name: str
    min: float
    max: float
    mean: float
    std: float


@dataclass(frozen=True)
class SplitAssignment:
    """A train/test partition of record indices, reproducible from its seed."""

    train_indices: tuple[int, ...]
    test_indices: tuple[int, ...]
    seed: int


def _parse_float(text: str, column: str, line: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise DataError(
            f"line {line}: column {column!r} has non-numeric value {text!r}"
        ) from None


def _parse_days(text: str, line: int) -> int:
    value = _parse_float(text, "curing_days", line)
    if value != int(value):
        raise DataError(f"line {line}: curing_days must be an integer, got {text!r}")
    return int(value)


def _parse_training(text: str, line: int) -> bool | None:
    stripped = text.strip()
    if stripped == "":
        return None
    lowered = stripped.lower()
    if lowered == "true":
        return True
    if lowered == "false":
        return False
    raise DataError(
        f"line {line}: training flag must be 'True' or 'False', got {text!r}"
    )


def _records_from_reader(reader, source: str) -> Dataset:
    header = next(reader, None)
    if header is None:
        raise DataError(f"{source}: empty file, expected a header row")
    header = [h.strip() for h in header]
    required = CSV_COLUMNS[:-1]
    has_training = "training" in header
    expected = list(CSV_COLUMNS) if has_training else list(required)
    for column in expected:
        if column not in header:
            raise DataError(f"{source}: missing column {column!r}")
    unknown = [h for h in header if h not in CSV_COLUMNS]
    if unknown:
        raise DataError(f"{source}: unknown column {unknown[0]!r}")
    position = {name: header.index(name) for name in expected}

    records = []
    for line_no, row in enumerate(reader, start=2):
        if not row or all(cell.strip() == "" for cell in row):
            continue
        if len(row) != len(header):
            raise DataError(
                f"line {line_no}: expected {len(header)} fields, got {len(row)}"
            )

        def cell(name):
            return row[position[name]].strip()

        condition = cell("curing_condition")
        if condition not in CURING_CONDITIONS:
            raise DataError(
                f"line {line_no}: curing_condition must be one of "
                f"{CURING_CONDITIONS}, got {condition!r}"
            )
        try:
            record = MixRecord(
                mix_id=cell("mix_id"),
                w_b=_parse_float(cell("w_b"), "w_b", line_no),
                binder=_parse_float(cell("binder"), "binder", line_no),
                fly_ash=_parse_float(cell("fly_ash"), "fly_ash", line_no),
                ggbs=_parse_float(cell("ggbs"), "ggbs", line_no),
                sp=_parse_float(cell("sp"), "sp", line_no),
                ca_fa=_parse_float(cell("ca_fa"), "ca_fa", line_no),
                curing_condition=condition,
                curing_days=_parse_days(cell("curing_days"), line_no),
                porosity=_parse_float(cell("porosity"), "porosity", line_no),
                training=_parse_training(cell("training"), line_no)
                if has_training
                else None,
            )
        except DataError as exc:
            if str(exc).startswith("line "):
                raise
            raise DataError(f"line {line_no}: {exc}") from None
        records.append(record)
    return Dataset(tuple(records))


def load_csv(path) -> Dataset:
    """Load a Dataset from a CSV file with the standard mix schema."""
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    with handle:
        return _records_from_reader(csv.reader(handle), str(path))


def loads_csv(text: str, source: str = "<string>") -> Dataset:
    """Parse a Dataset from CSV text (same schema as :func:`load_csv`)."""
    return _records_from_reader(csv.reader(io.StringIO(text)), source)


def _format_number(value: float) -> str:
    # shortest representation that round-trips; integers stay integer-looking
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def write_csv(dataset: Dataset, path) -> None:
    """Write a Dataset to CSV; the training column is emitted only if any
    record carries a flag."""
    any_flag = any(r.training is not None for r in dataset)
    columns = CSV_COLUMNS if any_flag else CSV_COLUMNS[:-1]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(columns)
        for r in dataset:
            row = [
                r.mix_id,
                _format_number(r.w_b),
                _format_number(r.binder),
                _format_number(r.fly_ash),
                _format_number(r.ggbs),
                _format_number(r.sp),
                _format_number(r.ca_fa),
                r.curing_condition,
                str(r.curing_days),
                _format_number(r.porosity),
            ]
            if any_flag:
                row.append("" if r.training is None else str(r.training))
            writer.writerow(row)


def load_corpus() -> Dataset:
    """The packaged 34-row reference corpus."""
    text = (
        resources.files("poroforest.data").joinpath("mix_corpus.csv").read_text("utf-8")
    )
    return loads_csv(text, "mix_corpus.csv")


_SUMMARY_COLUMNS = (
    "w_b",
    "binder",
    "fly_ash",
    "ggbs",
    "sp",
    "ca_fa",
    "curing_days",
    "porosity",
)


def summarize(dataset: Dataset) -> list[ColumnStats]:
    """Min/max/mean/sample-std for every continuous predictor plus porosity."""
    if len(dataset) == 0:
        raise DataError("cannot summarize an empty dataset")
    stats = []
    for name in _SUMMARY_COLUMNS:
        values = np.array([getattr(r, name) for r in dataset], dtype=np.float64)
        std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        stats.append(
            ColumnStats(
                name=name,
                min=float(values.min()),
                max=float(values.max()),
                mean=float(values.mean()),
                std=std,
            )
        )
    return stats


def _quartile_bin(value: float, quartiles: np.ndarray) -> int:
    """Bin index 0-3; values on a boundary go to the lower bin."""
    return int(np.sum(quartiles < value))


def _strata(dataset: Dataset) -> list[tuple[str, int]]:
    """(concrete type, curing-day quartile bin) label per record.

    Quartile bins are computed per concrete type so each type's curing-day
    distribution is represented in the training set.
    """
    types = [concrete_type(r) for r in dataset]
    labels: list[tuple[str, int]] = [("", 0)] * len(dataset)
    for t in ("opc", "fly_ash", "ggbs"):
        indices = [i for i, ti in enumerate(types) if ti == t]
        if not indices:
            continue
        days = np.array([dataset[i].curing_days for i in indices], dtype=np.float64)
        quartiles = np.percentile(days, [25, 50, 75])
        for i in indices:
            labels[i] = (t, _quartile_bin(dataset[i].curing_days, quartiles))
    return labels


def _largest_remainder(targets: list[float], caps: list[int], total: int) -> list[int]:
    """Integer apportionment: floor each target, then distribute the remaining
    units by largest fractional part (ties to the earlier group), never
    exceeding the per-group cap."""
    counts = [min(int(np.floor(t)), c) for t, c in zip(targets, caps)]
    remainders = [t - np.floor(t) for t in targets]
    leftover = total - sum(counts)
    order = sorted(range(len(targets)), key=lambda i: (-remainders[i], i))
    while leftover > 0:
        progressed = False
        for i in order:
            if leftover == 0:
                break
            if counts[i] < caps[i]:
                counts[i] += 1
                leftover -= 1
                progressed = True
        if not progressed:
            raise ValueError("cannot apportion: all groups at capacity")
    return counts


_RANGE_COLUMNS = ("w_b", "binder")


def stratified_split(dataset: Dataset, fraction: float, seed: int) -> SplitAssignment:
    """Partition record indices into train/test, stratified by concrete type
    and per-type curing-day quartile bins.

    |train| = round(fraction * n); per-type and per-stratum training counts
    stay within one record of the proportional share. The train set is
    post-adjusted (by swapping records) to contain the global min and max of
    w_b and binder, so every model sees the full observed range.
    """
    n = len(dataset)
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    n_train = int(round(fraction * n))
    if n_train == 0 or n_train == n:
        raise DataError(
            f"fraction {fraction} yields an empty train or test set for n={n}"
        )

    labels = _strata(dataset)
    rng = np.random.default_rng(seed)

    # Apportion the training budget hierarchically: types first, then
    # curing-day bins within each type — largest-remainder at both levels.
    type_order = [t for t in ("opc", "fly_ash", "ggbs") if any(l[0] == t for l in labels)]
    type_members = {t: [i for i, l in enumerate(labels) if l[0] == t] for t in type_order}
    type_counts = _largest_remainder(
        [fraction * len(type_members[t]) for t in type_order],
        [len(type_members[t]) for t in type_order],
        n_train,
    )

    train: set[int] = set()
    for t, k_type in zip(type_order, type_counts):
        bins = sorted({labels[i][1] for i in type_members[t]})
        bin_members = {
            b: [i for i in type_members[t] if labels[i][1] == b] for b in bins
        }
        share = k_type / len(type_members[t])
        bin_counts = _largest_remainder(
            [share * len(bin_members[b]) for b in bins],
            [len(bin_members[b]) for b in bins],
            k_type,
        )
        for b, k_bin in zip(bins, bin_counts):
            members = bin_members[b]
            chosen = rng.permutation(len(members))[:k_bin]
            train.update(members[j] for j in chosen)

    _force_range_coverage(dataset, labels, train)

    train_idx = tuple(sorted(train))
    test_idx = tuple(i for i in range(n) if i not in train)
    return SplitAssignment(train_idx, test_idx, seed)


def _force_range_coverage(dataset: Dataset, labels, train: set[int]) -> None:
    """Swap records so the train set attains the global min and max of each
    range-critical column (w_b, binder). Swap partners are chosen from the
    same stratum when possible, then the same concrete type, then anywhere —
    lowest index first; records attaining any extreme value are never
    swapped out."""
    extremes = []
    for column in _RANGE_COLUMNS:
        values = [getattr(r, column) for r in dataset]
        extremes.append((column, min(values)))
        extremes.append((column, max(values)))
    protected = {
        i
        for i, r in enumerate(dataset)
        if any(getattr(r, column) == value for column, value in extremes)
    }
    for column, value in extremes:
        attained = [i for i in train if getattr(dataset[i], column) == value]
        if attained:
            continue
        candidates = [
            i for i in range(len(dataset))
            if i not in train and getattr(dataset[i], column) == value
        ]
        incoming = candidates[0]
        swappable = sorted(i for i in train if i not in protected)
        if not swappable:
            raise DataError(
                "cannot force range coverage: every training record attains "
                "an extreme value"
            )
        for preference in (
            lambda i: labels[i] == labels[incoming],
            lambda i: labels[i][0] == labels[incoming][0],
            lambda i: True,
        ):
            matches = [i for i in swappable if preference(i)]
            if matches:
                outgoing = matches[0]
                break
        train.remove(outgoing)
        train.add(incoming)


def apply_assignment(dataset: Dataset, assignment: SplitAssignment) -> Dataset:
    """Return a copy of the dataset with training flags set per the assignment."""
    train = set(assignment.train_indices)
    test = set(assignment.test_indices)
    if train | test != set(range(len(dataset))) or train & test:
        raise ValueError("assignment does not partition the dataset's indices")
    records = tuple(
        replace(r, training=i in train) for i, r in enumerate(dataset.records)
    )
    return Dataset(records, dataset.schema)
