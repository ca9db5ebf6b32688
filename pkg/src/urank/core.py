"""Data model, synthetic generative models, sampling and dataset I/O.

Random numbers come from numpy's PCG64 generator (``numpy.random.default_rng``).
Replicate ``k`` of an experiment seeded with ``seed`` uses ``seed + k``, so a
parallel run reproduces the serial one.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Sequence, Union

import numpy as np
from scipy.special import ndtr

from urank.errors import DatasetFormatError, ModelError, UnsupportedModelError

PROB_TOL = 1e-12


def _frozen(a, dtype=np.float64) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def make_rng(seed) -> np.random.Generator:
    """Return a PCG64 generator; ``seed`` may already be a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise ValueError("an explicit seed is required")
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.default_rng(seed)


def replicate_seed(seed: int, replicate: int) -> int:
    return (int(seed) + int(replicate)) % 2**64


# ---------------------------------------------------------------------------
# samples and datasets


@dataclass(frozen=True)
class LabeledSample:
    x: tuple
    y: float

    def __post_init__(self):
        x = tuple(float(v) for v in np.atleast_1d(self.x))
        if not x:
            raise ValueError("feature vector must have length >= 1")
        if not all(math.isfinite(v) for v in x) or not math.isfinite(float(self.y)):
            raise ValueError("sample coordinates and label must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", float(self.y))


@dataclass(frozen=True, eq=False)
class Dataset:
    """An i.i.d. sample stored column-wise: ``X`` is (n, d), ``y`` is (n,)."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        y = np.array(self.y, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[1] < 1:
            raise DatasetFormatError(f"features must be an (n, d) array with d >= 1, got shape {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise DatasetFormatError("label vector length does not match number of samples")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DatasetFormatError("dataset contains non-finite values")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(y))

    @classmethod
    def from_samples(cls, samples: Sequence[LabeledSample]) -> "Dataset":
        if not samples:
            raise DatasetFormatError("empty sample list")
        d = len(samples[0].x)
        if any(len(sample.x) != d for sample in samples):
            raise DatasetFormatError("samples do not share a common dimension")
        return cls(np.array([sample.x for sample in samples]), np.array([sample.y for sample in samples]))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def samples(self) -> tuple:
        return tuple(LabeledSample(tuple(x), y) for x, y in zip(self.X, self.y))

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return np.array_equal(self.X, other.X) and np.array_equal(self.y, other.y)

    def __hash__(self):
        return hash((self.X.tobytes(), self.y.tobytes()))

    def take(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx])


def z_value(y, y_prime):
    """Half label difference; positive when the first instance is better."""
    return (y - y_prime) / 2


def require_pairs(data: Dataset) -> None:
    if data.n < 2:
        raise ValueError(f"pairwise operations need n >= 2, got n={data.n}")


# ---------------------------------------------------------------------------
# generative models


class SupportAtom(NamedTuple):
    x: tuple
    prob: float
    law: dict


def uniform_grid(low, high, size: int) -> np.ndarray:
    """Cell midpoints of a uniform grid on the box [low, high]^d.

    ``size`` is the number of cells per axis; the result has ``size**d`` rows.
    """
    low = np.atleast_1d(np.asarray(low, dtype=np.float64))
    high = np.atleast_1d(np.asarray(high, dtype=np.float64))
    if low.shape != high.shape or np.any(high <= low):
        raise ModelError("grid bounds must satisfy low < high coordinatewise")
    if size < 1:
        raise ModelError("grid size must be positive")
    axes = [lo + (np.arange(size) + 0.5) * (hi - lo) / size for lo, hi in zip(low, high)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


class FiniteModel:
    """Shared machinery of models with a finite marginal support."""

    kind = "finite"
    points: np.ndarray
    probs: np.ndarray

    def _init_support(self, points, probs):
        pts = np.array(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[1] == 0:
            raise ModelError("support points must form a non-empty (K, d) array")
        if probs is None:
            probs = np.full(pts.shape[0], 1.0 / pts.shape[0])
        p = np.array(probs, dtype=np.float64)
        if p.shape != (pts.shape[0],):
            raise ModelError("one probability per support point is required")
        if not np.all(np.isfinite(pts)):
            raise ModelError("support points must be finite")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ModelError("probabilities must be nonnegative")
        if abs(math.fsum(p) - 1.0) > PROB_TOL:
            raise ModelError(f"probabilities sum to {math.fsum(p)!r}, not 1")
        if len({tuple(row) for row in pts}) != pts.shape[0]:
            raise ModelError("support points must be distinct")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "probs", _frozen(p))
        object.__setattr__(self, "_index", {tuple(row): k for k, row in enumerate(pts)})

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def lookup(self, X) -> np.ndarray:
        """Support index of every row of ``X``; rows outside the support raise."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        try:
            return np.array([self._index[tuple(row)] for row in X], dtype=np.intp)
        except KeyError as exc:
            raise ValueError(f"point {exc.args[0]} is not in the model support") from None

    def draw_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.choice(self.size, size=n, p=self.probs)

    # subclasses: bayes_scores(), pair_probs(rows), joint_atoms(), sample_xy(), to_dict()

    def rho(self, ia, ib):
        """P(Y_a > Y_b) and P(Y_a < Y_b) for support indices (broadcast)."""
        raise NotImplementedError

    def pair_probs(self, rows=slice(None)):
        ia = np.arange(self.size)[rows][:, None]
        return self.rho(ia, np.arange(self.size)[None, :])


@dataclass(frozen=True, eq=False)
class DiscreteBipartite(FiniteModel):
    """Binary labels in {-1, +1}; ``eta[k] = P(Y = 1 | X = points[k])``."""

    points: np.ndarray
    probs: np.ndarray
    eta: np.ndarray
    kind: str = field(default="bipartite", init=False)

    def __post_init__(self):
        self._init_support(self.points, self.probs)
        eta = np.array(self.eta, dtype=np.float64)
        if eta.shape != (self.size,):
            raise ModelError("one posterior per support point is required")
        if np.any(eta < 0) or np.any(eta > 1) or not np.all(np.isfinite(eta)):
            raise ModelError("posteriors must lie in [0, 1]")
        object.__setattr__(self, "eta", _frozen(eta))

    @property
    def positive_rate(self) -> float:
        return math.fsum(self.probs * self.eta)

    def bayes_scores(self) -> np.ndarray:
        return self.eta

    def eta_at(self, X) -> np.ndarray:
        return self.eta[self.lookup(X)]

    def rho(self, ia, ib):
        ea, eb = self.eta[ia], self.eta[ib]
        return ea * (1.0 - eb), (1.0 - ea) * eb

    def joint_atoms(self):
        X = np.concatenate([self.points, self.points])
        y = np.concatenate([np.ones(self.size), -np.ones(self.size)])
        w = np.concatenate([self.probs * self.eta, self.probs * (1.0 - self.eta)])
        keep = w > 0
        return X[keep], y[keep], w[keep]

    def sample_xy(self, n, rng):
        idx = self.draw_indices(n, rng)
        y = np.where(rng.random(n) < self.eta[idx], 1.0, -1.0)
        return self.points[idx], y

    def to_dict(self) -> dict:
        return {
            "type": "bipartite",
            "points": self.points.tolist(),
            "probs": self.probs.tolist(),
            "eta": self.eta.tolist(),
        }


@dataclass(frozen=True, eq=False)
class NoiselessRegression(FiniteModel):
    """``Y = m(X)`` exactly; ``m_values[k] = m(points[k])``."""

    points: np.ndarray
    probs: np.ndarray
    m_values: np.ndarray
    kind: str = field(default="noiseless", init=False)

    def __post_init__(self):
        self._init_support(self.points, self.probs)
        m = np.array(self.m_values, dtype=np.float64)
        if m.shape != (self.size,) or not np.all(np.isfinite(m)):
            raise ModelError("one finite regression value per support point is required")
        object.__setattr__(self, "m_values", _frozen(m))

    def bayes_scores(self) -> np.ndarray:
        return self.m_values

    def m_at(self, X) -> np.ndarray:
        return self.m_values[self.lookup(X)]

    def rho(self, ia, ib):
        ma, mb = self.m_values[ia], self.m_values[ib]
        return (ma > mb).astype(float), (ma < mb).astype(float)

    def joint_atoms(self):
        keep = self.probs > 0
        return self.points[keep], self.m_values[keep], self.probs[keep]

    def sample_xy(self, n, rng):
        idx = self.draw_indices(n, rng)
        return self.points[idx], self.m_values[idx].copy()

    def to_dict(self) -> dict:
        return {
            "type": "noiseless",
            "points": self.points.tolist(),
            "probs": self.probs.tolist(),
            "m": self.m_values.tolist(),
        }


@dataclass(frozen=True, eq=False)
class NoisyRegression(FiniteModel):
    """``Y = m(X) + sigma(X) * eps`` with standard gaussian ``eps``."""

    points: np.ndarray
    probs: np.ndarray
    m_values: np.ndarray
    sigma_values: np.ndarray
    kind: str = field(default="noisy", init=False)

    def __post_init__(self):
        self._init_support(self.points, self.probs)
        m = np.array(self.m_values, dtype=np.float64)
        sig = np.broadcast_to(np.array(self.sigma_values, dtype=np.float64), (self.size,))
        if m.shape != (self.size,) or not np.all(np.isfinite(m)):
            raise ModelError("one finite regression value per support point is required")
        if not np.all(np.isfinite(sig)) or np.any(sig <= 0):
            raise ModelError("conditional standard deviations must be > 0")
        object.__setattr__(self, "m_values", _frozen(m))
        object.__setattr__(self, "sigma_values", _frozen(sig))

    def bayes_scores(self) -> np.ndarray:
        return self.m_values

    def m_at(self, X) -> np.ndarray:
        return self.m_values[self.lookup(X)]

    def delta(self, ia, ib) -> np.ndarray:
        m, s2 = self.m_values, self.sigma_values**2
        return (m[ia] - m[ib]) / np.sqrt(s2[ia] + s2[ib])

    def rho(self, ia, ib):
        plus = ndtr(self.delta(ia, ib))
        return plus, ndtr(-self.delta(ia, ib))

    def joint_atoms(self):
        raise UnsupportedModelError("noisy regression has continuous labels; no finite joint support")

    def sample_xy(self, n, rng):
        idx = self.draw_indices(n, rng)
        y = self.m_values[idx] + self.sigma_values[idx] * rng.standard_normal(n)
        return self.points[idx], y

    def to_dict(self) -> dict:
        return {
            "type": "noisy",
            "points": self.points.tolist(),
            "probs": self.probs.tolist(),
            "m": self.m_values.tolist(),
            "sigma": self.sigma_values.tolist(),
        }


@dataclass(frozen=True, eq=False)
class ContinuousRegression:
    """Regression model with X uniform on a box; only sampling is exact.

    Use :meth:`discretize` to obtain a finite grid model for exact expectations.
    """

    low: np.ndarray
    high: np.ndarray
    m: Callable[[np.ndarray], np.ndarray]
    sigma: Union[Callable[[np.ndarray], np.ndarray], None] = None
    kind: str = field(default="continuous", init=False)

    def __post_init__(self):
        low = np.atleast_1d(np.asarray(self.low, dtype=np.float64))
        high = np.atleast_1d(np.asarray(self.high, dtype=np.float64))
        if low.shape != high.shape or np.any(high <= low):
            raise ModelError("box bounds must satisfy low < high coordinatewise")
        object.__setattr__(self, "low", _frozen(low))
        object.__setattr__(self, "high", _frozen(high))

    @property
    def d(self) -> int:
        return self.low.shape[0]

    def sample_xy(self, n, rng):
        X = self.low + (self.high - self.low) * rng.random((n, self.d))
        y = np.asarray(self.m(X), dtype=np.float64)
        if self.sigma is not None:
            sig = np.asarray(self.sigma(X), dtype=np.float64)
            if np.any(sig <= 0):
                raise ModelError("conditional standard deviations must be > 0")
            y = y + sig * rng.standard_normal(n)
        return X, y

    def discretize(self, size: int):
        pts = uniform_grid(self.low, self.high, size)
        m = np.asarray(self.m(pts), dtype=np.float64)
        if self.sigma is None:
            return NoiselessRegression(pts, None, m)
        return NoisyRegression(pts, None, m, np.asarray(self.sigma(pts), dtype=np.float64))

    def pair_probs(self, rows=slice(None)):
        raise UnsupportedModelError("continuous model: discretize it first")

    def rho(self, ia, ib):
        raise UnsupportedModelError("continuous model: discretize it first")

    def joint_atoms(self):
        raise UnsupportedModelError("continuous model: discretize it first")


SyntheticModel = Union[DiscreteBipartite, NoiselessRegression, NoisyRegression, ContinuousRegression]


def m1() -> DiscreteBipartite:
    """Three-point bipartite reference model used throughout the test-suite."""
    return DiscreteBipartite([[0.0], [1.0], [2.0]], [0.5, 0.25, 0.25], [0.2, 0.5, 0.9])


def model_from_dict(spec: dict) -> FiniteModel:
    kind = spec.get("type")
    if kind == "m1":
        return m1()
    if kind == "bipartite":
        return DiscreteBipartite(spec["points"], spec.get("probs"), spec["eta"])
    if kind == "noiseless":
        return NoiselessRegression(spec["points"], spec.get("probs"), spec["m"])
    if kind == "noisy":
        return NoisyRegression(spec["points"], spec.get("probs"), spec["m"], spec["sigma"])
    if kind == "grid":
        return _grid_model(spec)
    raise ModelError(f"unknown model type {kind!r}")


def grid_shape(shape: dict, x: np.ndarray, low: float, high: float) -> np.ndarray:
    """Evaluate a named 1-D profile: ``step`` (``1{x > at}``) or ``linear``
    (affine from ``start`` at ``low`` to ``stop`` at ``high``)."""
    kind = shape.get("shape")
    if kind == "step":
        return (x > float(shape.get("at", 0.5 * (low + high)))).astype(np.float64)
    if kind == "linear":
        a, b = float(shape["start"]), float(shape["stop"])
        return a + (b - a) * (x - low) / (high - low)
    raise ModelError(f"unknown profile {kind!r}")


def _grid_model(spec: dict) -> FiniteModel:
    """Uniform 1-D grid of cell midpoints on [low, high] with a named profile."""
    low, high = float(spec.get("low", 0.0)), float(spec.get("high", 1.0))
    pts = uniform_grid(low, high, int(spec["size"]))
    values = grid_shape(spec["profile"], pts[:, 0], low, high)
    law = spec["law"]
    if law == "bipartite":
        return DiscreteBipartite(pts, None, values)
    if law == "noiseless":
        return NoiselessRegression(pts, None, values)
    if law == "noisy":
        return NoisyRegression(pts, None, values, np.full(pts.shape[0], float(spec["sigma"])))
    raise ModelError(f"unknown grid law {law!r}")


def require_finite(model) -> FiniteModel:
    if not isinstance(model, FiniteModel):
        raise UnsupportedModelError(
            f"{type(model).__name__} has no finite support; discretize it on a grid first"
        )
    return model


def enumerate_support(model) -> list:
    """List every support point with its probability and conditional label law."""
    model = require_finite(model)
    atoms = []
    for k in range(model.size):
        if model.kind == "bipartite":
            law = {"eta": float(model.eta[k])}
        elif model.kind == "noiseless":
            law = {"m": float(model.m_values[k])}
        else:
            law = {"m": float(model.m_values[k]), "sigma": float(model.sigma_values[k])}
        atoms.append(SupportAtom(tuple(model.points[k].tolist()), float(model.probs[k]), law))
    return atoms


def sample_dataset(model, n: int, seed) -> Dataset:
    """Draw ``n`` i.i.d. labeled samples; deterministic given ``seed``."""
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    X, y = model.sample_xy(int(n), make_rng(seed))
    return Dataset(X, y)


# ---------------------------------------------------------------------------
# file I/O


def _infer_format(path, fmt):
    if fmt is not None:
        fmt = fmt.lower()
    else:
        fmt = Path(path).suffix.lstrip(".").lower()
    if fmt not in ("csv", "json"):
        raise DatasetFormatError(f"unsupported dataset format {fmt!r}")
    return fmt


def dataset_to_json(data: Dataset) -> dict:
    return {"d": data.d, "samples": [{"x": x.tolist(), "y": float(y)} for x, y in zip(data.X, data.y)]}


def dataset_from_json(doc) -> Dataset:
    try:
        d = doc["d"]
        samples = doc["samples"]
    except (KeyError, TypeError):
        raise DatasetFormatError('dataset JSON needs keys "d" and "samples"') from None
    if not isinstance(d, int) or d < 1:
        raise DatasetFormatError('"d" must be a positive integer')
    X, y = [], []
    for i, item in enumerate(samples):
        try:
            x, label = item["x"], item["y"]
        except (KeyError, TypeError):
            raise DatasetFormatError(f"sample {i} lacks x or y") from None
        if not isinstance(x, list) or len(x) != d:
            raise DatasetFormatError(f"sample {i}: dimension mismatch (expected {d})")
        vals = list(x) + [label]
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
            raise DatasetFormatError(f"sample {i}: non-numeric field")
        X.append([float(v) for v in x])
        y.append(float(label))
    if not X:
        raise DatasetFormatError("dataset has no samples")
    return Dataset(np.array(X).reshape(len(X), d), np.array(y))


def write_dataset_csv(data: Dataset, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow([f"x{j + 1}" for j in range(data.d)] + ["y"])
    for x, y in zip(data.X, data.y):
        w.writerow([repr(float(v)) for v in x] + [repr(float(y))])


def read_dataset_csv(fh) -> Dataset:
    rows = [line for line in csv.reader(fh) if line]
    if not rows:
        raise DatasetFormatError("empty CSV file")
    header = [cell.strip() for cell in rows[0]]
    d = len(header) - 1
    if d < 1 or header != [f"x{j + 1}" for j in range(d)] + ["y"]:
        raise DatasetFormatError(f"CSV header must be x1..xd,y; got {','.join(header)}")
    X, y = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        fields = [field.strip() for field in row]
        if len(fields) != d + 1 or any(field == "" for field in fields):
            raise DatasetFormatError(f"line {lineno}: dimension mismatch (expected {d} features and y)")
        try:
            vals = [float(field) for field in fields]
        except ValueError:
            raise DatasetFormatError(f"line {lineno}: non-numeric field") from None
        X.append(vals[:d])
        y.append(vals[d])
    if not X:
        raise DatasetFormatError("CSV file has no data rows")
    return Dataset(np.array(X), np.array(y))


def save_dataset(data: Dataset, path, format: str | None = None) -> None:
    fmt = _infer_format(path, format)
    with open(path, "w", newline="") as fh:
        if fmt == "csv":
            write_dataset_csv(data, fh)
        else:
            json.dump(dataset_to_json(data), fh)
            fh.write("\n")


def load_dataset(path, format: str | None = None) -> Dataset:
    fmt = _infer_format(path, format)
    with open(path, newline="") as fh:
        if fmt == "csv":
            return read_dataset_csv(fh)
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"invalid JSON: {exc}") from None
    return dataset_from_json(doc)
