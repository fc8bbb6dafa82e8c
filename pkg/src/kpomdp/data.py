"""Training-tuple container and columnar text persistence.

A dataset holds n transition tuples (s, o, a, R, s', o'). States and
observations are numpy arrays with one row per tuple; actions keep their
native values (symbols or numbers). Files are comma-separated with a header
row; floats are written with 17 significant digits so a reload is bit-stable.
"""

import csv
from dataclasses import dataclass

import numpy as np


@dataclass
class Dataset:
    states: np.ndarray
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    next_obs: np.ndarray

    def __post_init__(self):
        n = self.n
        if n < 1:
            raise ValueError("dataset must hold at least one tuple")
        for arr in (self.obs, self.actions, self.rewards, self.next_states, self.next_obs):
            if arr.shape[0] != n:
                raise ValueError("dataset fields have mismatched lengths")

    @property
    def n(self) -> int:
        return self.states.shape[0]


def _columns(name, arr):
    """Flatten one field into (header, column) pairs."""
    arr = np.asarray(arr)
    if arr.ndim == 1:
        return [(f"{name}0", arr)]
    return [(f"{name}{d}", arr[:, d]) for d in range(arr.shape[1])]


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def save_dataset(data: Dataset, path) -> None:
    cols = (
        _columns("s", data.states)
        + _columns("o", data.obs)
        + _columns("a", data.actions)
        + [("r", data.rewards)]
        + _columns("sp", data.next_states)
        + _columns("op", data.next_obs)
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([name for name, _ in cols])
        for i in range(data.n):
            writer.writerow([_fmt(col[i]) for _, col in cols])


def _parse_column(values):
    """Infer int, then float, then string for one column of text cells."""
    try:
        return np.array([int(v) for v in values], dtype=np.int64)
    except ValueError:
        pass
    try:
        return np.array([float(v) for v in values], dtype=np.float64)
    except ValueError:
        return np.array(values)


def _gather(header, cells, prefix):
    names = [h for h in header if h.startswith(prefix) and h[len(prefix) :].isdigit()]
    names.sort(key=lambda h: int(h[len(prefix) :]))
    cols = [_parse_column([row[header.index(h)] for row in cells]) for h in names]
    if len(cols) == 1:
        return cols[0]
    return np.column_stack(cols)


def load_dataset(path) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cells = [row for row in reader if row]
    return Dataset(
        states=_gather(header, cells, "s"),
        obs=_gather(header, cells, "o"),
        actions=_gather(header, cells, "a"),
        rewards=_parse_column([row[header.index("r")] for row in cells]).astype(float),
        next_states=_gather(header, cells, "sp"),
        next_obs=_gather(header, cells, "op"),
    )
