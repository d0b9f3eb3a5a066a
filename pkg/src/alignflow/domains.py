"""Synthetic paired domains with a known invertible A -> B map.

Training sets are drawn independently per domain (unpaired). Validation
and test sets keep the ground-truth pairing ``b = M a`` and are returned
as :class:`PairedSet` objects, which the training loop refuses when they
are tagged as test data.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.datasets import make_moons

BASES = ("two_moons", "gaussian_mixture", "checkerboard")
MAPS = ("rotation", "diag_scale", "shear", "composed")


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class UnpairedData:
    a: np.ndarray
    b: np.ndarray


@dataclass(frozen=True)
class PairedSet:
    a: np.ndarray
    b: np.ndarray
    split: str = "test"

    def __post_init__(self):
        if self.a.shape != self.b.shape:
            raise DomainError(f"paired arrays differ in shape: {self.a.shape} vs {self.b.shape}")

    def __len__(self):
        return len(self.a)


@dataclass(frozen=True)
class DomainPairSpec:
    base: str = "two_moons"
    k: int = 3
    true_map: dict = field(default_factory=lambda: {"name": "rotation", "theta": 0.0})
    noise_scale: float = 0.05
    n_train: int = 500
    n_val: int = 200
    n_test: int = 500
    seed: int = 0
    dim: int = 2

    def __post_init__(self):
        if self.base not in BASES:
            raise DomainError(f"unknown base distribution {self.base!r}; choose from {BASES}")
        if min(self.n_train, self.n_val, self.n_test) < 1:
            raise DomainError("n_train, n_val and n_test must all be >= 1")
        if self.base != "gaussian_mixture" and self.dim != 2:
            raise DomainError(f"{self.base} is two-dimensional")
        map_matrix(self.true_map, self.dim)  # validates

    def to_dict(self):
        return {
            "base": self.base,
            "k": self.k,
            "true_map": self.true_map,
            "noise_scale": self.noise_scale,
            "n_train": self.n_train,
            "n_val": self.n_val,
            "n_test": self.n_test,
            "seed": self.seed,
            "dim": self.dim,
        }

    @property
    def matrix(self) -> np.ndarray:
        return map_matrix(self.true_map, self.dim)


def map_matrix(spec: dict, dim: int = 2) -> np.ndarray:
    """Matrix ``M`` of a linear map description; ``b = a @ M.T``."""
    if not isinstance(spec, dict) or "name" not in spec:
        raise DomainError(f"map must be a dict with a 'name', got {spec!r}")
    name = spec["name"]
    if name == "rotation":
        theta = float(spec.get("theta", 0.0))
        m = np.eye(dim)
        c, s = math.cos(theta), math.sin(theta)
        m[:2, :2] = [[c, -s], [s, c]]
        return m
    if name == "diag_scale":
        s = np.broadcast_to(np.asarray(spec.get("s", 1.0), dtype=float), (dim,))
        if np.any(s == 0):
            raise DomainError("diag_scale factors must be non-zero")
        return np.diag(s)
    if name == "shear":
        m = np.eye(dim)
        m[0, 1] = float(spec.get("m", 0.0))
        return m
    if name == "composed":
        out = np.eye(dim)
        for part in spec.get("maps", []):
            out = map_matrix(part, dim) @ out
        return out
    raise DomainError(f"unknown map {name!r}; choose from {MAPS}")


def apply_map(spec: dict, a: np.ndarray) -> np.ndarray:
    return a @ map_matrix(spec, a.shape[1]).T


def mixture_params(k: int, dim: int, noise_scale: float):
    """Means on a radius-2 circle with unequal weights and spreads.

    The unequal weights keep rotations of the mixture from being
    symmetries of it.
    """
    if k < 1:
        raise DomainError("gaussian_mixture needs k >= 1")
    angles = 2 * math.pi * np.arange(k) / k
    means = np.zeros((k, dim))
    means[:, 0] = 2 * np.cos(angles)
    means[:, 1] = 2 * np.sin(angles)
    weights = (k - np.arange(k)).astype(float)
    weights /= weights.sum()
    stds = noise_scale * (1.0 + 0.25 * np.arange(k))
    return means, weights, stds


def sample_base(spec: DomainPairSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    if spec.base == "two_moons":
        x, _ = make_moons(n, noise=spec.noise_scale, random_state=int(rng.integers(2**31)))
        return x.astype(np.float64)
    if spec.base == "gaussian_mixture":
        means, weights, stds = mixture_params(spec.k, spec.dim, spec.noise_scale)
        comp = rng.choice(spec.k, size=n, p=weights)
        return means[comp] + stds[comp, None] * rng.standard_normal((n, spec.dim))
    # 4x4 checkerboard on [-2, 2]^2, dark cells only
    cells = np.array([(i, j) for i in range(4) for j in range(4) if (i + j) % 2 == 0])
    pick = cells[rng.integers(len(cells), size=n)]
    x = pick - 2.0 + rng.uniform(size=(n, 2))
    if spec.noise_scale:
        x = x + spec.noise_scale * rng.standard_normal((n, 2))
    return x


def base_log_density(spec: DomainPairSpec, x: np.ndarray) -> np.ndarray:
    """Exact log-density of the gaussian_mixture base (others have none in closed form)."""
    if spec.base != "gaussian_mixture":
        raise DomainError(f"no closed-form density for {spec.base}")
    means, weights, stds = mixture_params(spec.k, spec.dim, spec.noise_scale)
    sq = ((x[:, None, :] - means[None]) ** 2).sum(-1)
    comp = (np.log(weights) - spec.dim * np.log(stds) - 0.5 * spec.dim * math.log(2 * math.pi)
            - 0.5 * sq / stds**2)
    top = comp.max(axis=1, keepdims=True)
    return (top + np.log(np.exp(comp - top).sum(axis=1, keepdims=True)))[:, 0]


def generate(spec: DomainPairSpec):
    """``(UnpairedData, paired_val, paired_test)`` from independent seed streams."""
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(spec.seed).spawn(4)]
    a = sample_base(spec, spec.n_train, streams[0])
    b = apply_map(spec.true_map, sample_base(spec, spec.n_train, streams[1]))
    va = sample_base(spec, spec.n_val, streams[2])
    ta = sample_base(spec, spec.n_test, streams[3])
    return (
        UnpairedData(a, b),
        PairedSet(va, apply_map(spec.true_map, va), split="val"),
        PairedSet(ta, apply_map(spec.true_map, ta), split="test"),
    )


def sample_domain(spec: DomainPairSpec, domain: str, n: int, seed: int) -> np.ndarray:
    x = sample_base(spec, n, np.random.default_rng(seed))
    return apply_map(spec.true_map, x) if domain == "B" else x


# CSV exchange: header "<tag>_0,...,<tag>_{d-1}", one row per point.


def format_float(v: float) -> str:
    return format(float(v), ".17g")


def write_csv(path_or_buf, columns: list[str], rows) -> None:
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    f = open(path_or_buf, "w", newline="", encoding="utf-8") if own else path_or_buf
    try:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_float(v) for v in row])
    finally:
        if own:
            f.close()


def write_points(path, x: np.ndarray, tag: str = "a") -> None:
    x = np.atleast_2d(x)
    d = x.shape[1]
    write_csv(path, [f"{tag}_{i}" for i in range(d)], x)


def read_points(path) -> tuple[np.ndarray, list[str]]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            return np.zeros((0, 0)), []
        rows = [[float(v) for v in r] for r in reader if r]
    if rows and any(len(r) != len(header) for r in rows):
        raise DomainError(f"{path}: ragged rows")
    x = np.array(rows, dtype=np.float64).reshape(len(rows), len(header))
    return x, header


def write_dataset(out_dir, spec: DomainPairSpec) -> None:
    import pathlib

    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train, val, test = generate(spec)
    write_points(out / "train_a.csv", train.a, "a")
    write_points(out / "train_b.csv", train.b, "b")
    for name, ps in (("val", val), ("test", test)):
        d = ps.a.shape[1]
        write_csv(out / f"{name}_pairs.csv", [f"a_{i}" for i in range(d)] + [f"b_{i}" for i in range(d)],
                  np.hstack([ps.a, ps.b]))
    (out / "spec.json").write_text(json.dumps(spec.to_dict(), indent=2))
