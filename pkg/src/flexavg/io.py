"""CSV tables, saved fits and key=value config files."""

from __future__ import annotations

import configparser
import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, MissingColumn, NonNumericCell, ParseError
from .jcvma import CandidateSet, JcvmaFit, average_coefficients
from .loss import LossSpec
from .optim import WeightVector
from .regress import CandidateModel, Coefficients, Dataset

FIT_FORMAT = "flexavg-fit/1"
INTERCEPT = "(intercept)"


@dataclass(frozen=True)
class Table:
    """A rectangular numeric CSV: header names and an (n x c) array."""

    names: tuple
    values: np.ndarray

    def column(self, name) -> np.ndarray:
        return self.values[:, self.index(name)]

    def index(self, name) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise MissingColumn(f"no column named {name!r}", column=name) from None

    def dataset(self, response, predictors=None):
        """Dataset with a prepended constant; returns ``(dataset, pool_names)``.

        ``predictors`` defaults to every column except ``response``.
        """
        yi = self.index(response)
        if predictors is None:
            predictors = [c for c in self.names if c != response]
        cols = [self.index(c) for c in predictors]
        x = np.column_stack([np.ones(len(self.values)), self.values[:, cols]])
        return Dataset(x, self.values[:, yi]), (INTERCEPT, *predictors)


def load_csv(path) -> Table:
    """Read a header + numeric-cells CSV.

    Raises
    ------
    ParseError
        Empty file or ragged rows.
    NonNumericCell
        A blank or unparsable cell; ``row`` is the 1-based file line and
        ``column`` the header name.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = tuple(h.strip() for h in rows[0])
    if len(set(header)) != len(header):
        raise ParseError(f"{path}: duplicate column names in header")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}",
                             row=lineno)
        vals = []
        for name, cell in zip(header, row):
            try:
                v = float(cell)
            except ValueError:
                raise NonNumericCell(f"{path}:{lineno}: column {name!r} has non-numeric "
                                     f"cell {cell!r}", row=lineno, column=name) from None
            if not math.isfinite(v):
                raise NonNumericCell(f"{path}:{lineno}: column {name!r} is not finite",
                                     row=lineno, column=name)
            vals.append(v)
        data.append(vals)
    values = np.array(data, dtype=float).reshape(len(data), len(header))
    return Table(header, values)


def fmt(v) -> str:
    """Shortest round-tripping text for a number (``repr`` of the float)."""
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    return repr(float(v))


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


# --------------------------------------------------------------------------
# saved fits
# --------------------------------------------------------------------------


def fit_to_dict(fit: JcvmaFit, pool_names, response: str) -> dict:
    return {
        "format": FIT_FORMAT,
        "response": response,
        "loss": {"tau": fit.spec.tau, "p": fit.spec.p},
        "folds": fit.J,
        "seed": fit.seed,
        "pool": list(pool_names),
        "models": [[pool_names[i] for i in c.model.indices] for c in fit.coefficients],
        "coefficients": [[float(v) for v in c.values] for c in fit.coefficients],
        "weights": [float(w) for w in fit.weights.w],
        "dropped": list(fit.dropped),
        "averaged": {pool_names[c]: float(v) for c, v in zip(fit.pool, fit.averaged_theta)},
    }


def save_fit(path, fit: JcvmaFit, pool_names, response: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(fit_to_dict(fit, pool_names, response), indent=2) + "\n")


@dataclass(frozen=True)
class SavedFit:
    fit: JcvmaFit
    pool_names: tuple
    response: str


def load_fit(path) -> SavedFit:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read fit file {path}: {exc}") from exc
    if doc.get("format") != FIT_FORMAT:
        raise ParseError(f"{path}: unsupported fit format {doc.get('format')!r}")
    pool = tuple(doc["pool"])
    spec = LossSpec(doc["loss"]["tau"], doc["loss"]["p"])
    coefs = tuple(
        Coefficients(vals, CandidateModel(tuple(pool.index(c) for c in cols)), spec)
        for cols, vals in zip(doc["models"], doc["coefficients"]))
    models = CandidateSet(tuple(c.model for c in coefs))
    weights = WeightVector(doc["weights"])
    theta = average_coefficients(coefs, weights.w, models.pool)
    fit = JcvmaFit(coefs, weights, theta, spec, models, doc["folds"], doc["seed"],
                   tuple(doc["dropped"]))
    return SavedFit(fit, pool, doc["response"])


# --------------------------------------------------------------------------
# config files
# --------------------------------------------------------------------------


def read_config(path, section: str) -> dict:
    """Keys of ``[section]`` from an INI-style ``key = value`` file.

    Missing sections give an empty dict; a missing file is an error.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if not parser.has_section(section):
        return {}
    return {k.replace("-", "_"): v for k, v in parser.items(section)}


def split_list(value, cast=str) -> tuple:
    if value is None:
        return ()
    if isinstance(value, (list, tuple)):
        items = value
    else:
        items = str(value).replace(";", ",").split(",")
    try:
        return tuple(cast(v.strip()) if isinstance(v, str) else cast(v)
                     for v in items if str(v).strip())
    except ValueError as exc:
        raise ConfigError(f"bad list value {value!r}: {exc}") from exc
