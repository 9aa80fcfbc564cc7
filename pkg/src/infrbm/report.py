"""Training logs and the train/validation-gap early-stopping rule."""

import csv
import io
import math
from dataclasses import dataclass, field

FW_COLUMNS = ("t", "inner_obj", "inner_grad_norm", "w_norm", "train_ull", "valid_ull", "gap", "seconds")
CD_COLUMNS = ("epoch", "train_ull", "valid_ull", "gap", "seconds")


@dataclass
class TrainReport:
    columns: tuple
    records: list = field(default_factory=list)
    selected: int = None
    stopped_early: bool = False
    flags: list = field(default_factory=list)

    def append(self, **row):
        missing = set(self.columns) - row.keys()
        if missing:
            raise KeyError(f"report row is missing {sorted(missing)}")
        if not math.isclose(row["gap"], row["train_ull"] - row["valid_ull"], rel_tol=0, abs_tol=1e-12):
            raise ValueError("gap must equal train_ull - valid_ull")
        self.records.append(row)

    def column(self, name):
        return [r[name] for r in self.records]

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.records:
            w.writerow([_fmt(r[c]) for c in self.columns])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as f:
                f.write(text)
        return text


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


class GapEarlyStopping:
    """Stop once the train-validation gap has stayed above its running minimum
    (plus ``tolerance``) for ``patience`` consecutive evaluations.

    The selected point is the last evaluation before that streak began.
    ``patience <= 0`` disables stopping; the last evaluation is then selected.
    """

    def __init__(self, patience=3, tolerance=0.0):
        self.patience = patience
        self.tolerance = tolerance
        self.best_gap = math.inf
        self.bad_streak = 0
        self.last_good = None
        self.last = None

    def update(self, key, gap):
        """Record an evaluation; returns True when training should stop."""
        self.last = key
        if gap > self.best_gap + self.tolerance:
            self.bad_streak += 1
        else:
            self.bad_streak = 0
            self.last_good = key
        self.best_gap = min(self.best_gap, gap)
        return self.patience > 0 and self.bad_streak >= self.patience

    @property
    def selected(self):
        if self.patience > 0 and self.bad_streak >= self.patience:
            return self.last_good
        return self.last
