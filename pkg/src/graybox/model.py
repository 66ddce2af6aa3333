"""State-space triples, affine gray-box structures, and similarity-transform utilities.

All matrices are dense float64 arrays. Vectorization is column-major
throughout; every index computation in the package relies on that
convention.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy import kron  # standard Kronecker product; re-exported as part of the API

__all__ = [
    "Dims",
    "StateSpace",
    "AffineStructure",
    "Instance",
    "Residuals",
    "vec",
    "unvec",
    "kron",
    "block_slices",
    "eval_structure",
    "apply_similarity",
    "random_similarity",
    "generate_instance",
    "residuals",
]

# Relative singular-value floor below which a transform is treated as singular.
SINGULAR_RTOL = 1e-12


@dataclass(frozen=True)
class Dims:
    """State, input and output counts of a state-space model."""

    n_x: int
    n_u: int
    n_y: int

    def __post_init__(self) -> None:
        for name in ("n_x", "n_u", "n_y"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")

    @property
    def n_abc(self) -> int:
        """Total entry count of the (A, B, C) triple."""
        return self.n_x**2 + self.n_x * (self.n_u + self.n_y)

    @property
    def n_unknowns(self) -> int:
        """Length of the stacked unknown [vec(T); vec(TA); vec(TB); vec(C); 1]."""
        return 2 * self.n_x**2 + self.n_x * (self.n_u + self.n_y) + 1


def _as_matrix(value, rows: int, cols: int, name: str) -> np.ndarray:
    m = np.asarray(value, dtype=float)
    if m.shape != (rows, cols):
        raise ValueError(f"{name} must have shape ({rows}, {cols}), got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


@dataclass(frozen=True)
class StateSpace:
    """A continuous-time state-space triple (A, B, C) with no feed-through.

    Used both for black-box realizations (known numerically, unique only up
    to a state-coordinate change) and for structured models evaluated at a
    parameter point.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self) -> None:
        a = np.atleast_2d(np.asarray(self.A, dtype=float))
        if a.shape[0] != a.shape[1]:
            raise ValueError(f"A must be square, got shape {a.shape}")
        n_x = a.shape[0]
        b = np.atleast_2d(np.asarray(self.B, dtype=float))
        c = np.atleast_2d(np.asarray(self.C, dtype=float))
        object.__setattr__(self, "A", _as_matrix(a, n_x, n_x, "A"))
        object.__setattr__(self, "B", _as_matrix(b, n_x, b.shape[1], "B"))
        object.__setattr__(self, "C", _as_matrix(c, c.shape[0], n_x, "C"))

    @property
    def dims(self) -> Dims:
        return Dims(self.A.shape[0], self.B.shape[1], self.C.shape[0])

    def stacked(self) -> np.ndarray:
        """Column-major stacking [vec(A); vec(B); vec(C)]."""
        return np.concatenate([vec(self.A), vec(self.B), vec(self.C)])

    def to_dict(self) -> dict:
        d = self.dims
        return {
            "n_x": d.n_x,
            "n_u": d.n_u,
            "n_y": d.n_y,
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> StateSpace:
        for key in ("n_x", "n_u", "n_y", "A", "B", "C"):
            if key not in data:
                raise ValueError(f"state-space document is missing key {key!r}")
        dims = Dims(int(data["n_x"]), int(data["n_u"]), int(data["n_y"]))
        return cls(
            A=_as_matrix(data["A"], dims.n_x, dims.n_x, "A"),
            B=_as_matrix(data["B"], dims.n_x, dims.n_u, "B"),
            C=_as_matrix(data["C"], dims.n_y, dims.n_x, "C"),
        )


@dataclass(frozen=True)
class AffineStructure:
    """Affine parameterization of a gray-box model.

    The stacked entries [vec(A); vec(B); vec(C)] of the structured model are
    ``kappa0 + K @ theta``.  Rows of ``kappa0``/``K`` follow the fixed
    partition: the first n_x^2 rows belong to vec(A), the next n_x*n_u to
    vec(B), and the final n_x*n_y to vec(C).
    """

    kappa0: np.ndarray
    K: np.ndarray
    dims: Dims

    def __post_init__(self) -> None:
        k = np.atleast_2d(np.asarray(self.K, dtype=float))
        k0 = np.asarray(self.kappa0, dtype=float).reshape(-1)
        n_abc = self.dims.n_abc
        if k0.size != n_abc:
            raise ValueError(f"kappa0 must have length {n_abc}, got {k0.size}")
        if k.shape[0] != n_abc:
            raise ValueError(f"K must have {n_abc} rows, got {k.shape[0]}")
        if k.shape[1] < 1:
            raise ValueError("K must have at least one column")
        if not (np.all(np.isfinite(k0)) and np.all(np.isfinite(k))):
            raise ValueError("structure contains non-finite entries")
        object.__setattr__(self, "kappa0", k0)
        object.__setattr__(self, "K", k)

    @property
    def n_theta(self) -> int:
        return self.K.shape[1]

    def to_dict(self) -> dict:
        d = self.dims
        return {
            "n_x": d.n_x,
            "n_u": d.n_u,
            "n_y": d.n_y,
            "n_theta": self.n_theta,
            "kappa0": self.kappa0.tolist(),
            "K": self.K.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> AffineStructure:
        for key in ("n_x", "n_u", "n_y", "n_theta", "kappa0", "K"):
            if key not in data:
                raise ValueError(f"structure document is missing key {key!r}")
        dims = Dims(int(data["n_x"]), int(data["n_u"]), int(data["n_y"]))
        structure = cls(kappa0=np.asarray(data["kappa0"], dtype=float),
                        K=np.asarray(data["K"], dtype=float),
                        dims=dims)
        if structure.n_theta != int(data["n_theta"]):
            raise ValueError(
                f"n_theta={data['n_theta']} does not match K with {structure.n_theta} columns"
            )
        return structure


class Instance(NamedTuple):
    """A synthetic problem: black-box model, structured truth, and the hidden transform."""

    blackbox: StateSpace
    truth: StateSpace
    T: np.ndarray


class Residuals(NamedTuple):
    """Frobenius norms of the three similarity-equation residuals."""

    r_a: float
    r_b: float
    r_c: float


def vec(m: np.ndarray) -> np.ndarray:
    """Stack the columns of ``m`` into one vector."""
    return np.asarray(m, dtype=float).reshape(-1, order="F")


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec`: rebuild a ``rows`` x ``cols`` matrix column by column."""
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != rows * cols:
        raise ValueError(f"cannot reshape a length-{v.size} vector into {rows}x{cols}")
    return v.reshape(rows, cols, order="F")


def block_slices(dims: Dims) -> tuple[slice, slice, slice]:
    """Slices of the A, B and C blocks inside a stacked [vec(A); vec(B); vec(C)] vector."""
    n_a = dims.n_x**2
    n_b = dims.n_x * dims.n_u
    n_c = dims.n_x * dims.n_y
    return (slice(0, n_a), slice(n_a, n_a + n_b), slice(n_a + n_b, n_a + n_b + n_c))


def eval_structure(structure: AffineStructure, theta: np.ndarray) -> StateSpace:
    """Evaluate the structured model at a parameter point."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.size != structure.n_theta:
        raise ValueError(
            f"theta must have length {structure.n_theta}, got {theta.size}"
        )
    stacked = structure.kappa0 + structure.K @ theta
    d = structure.dims
    sl_a, sl_b, sl_c = block_slices(d)
    return StateSpace(
        A=unvec(stacked[sl_a], d.n_x, d.n_x),
        B=unvec(stacked[sl_b], d.n_x, d.n_u),
        C=unvec(stacked[sl_c], d.n_y, d.n_x),
    )


def apply_similarity(model: StateSpace, t: np.ndarray) -> StateSpace:
    """Change state coordinates: returns (T A T^-1, T B, C T^-1).

    The output satisfies the similarity equations exactly (up to roundoff)
    with ``t`` as the transform and ``model`` as the structured side.
    """
    n_x = model.dims.n_x
    t = _as_matrix(t, n_x, n_x, "T")
    sv = np.linalg.svd(t, compute_uv=False)
    if sv[0] == 0.0 or sv[-1] < SINGULAR_RTOL * sv[0]:
        raise ValueError("similarity transform is numerically singular")
    # X = M T^-1 solved as T' X' = M'
    a_bb = np.linalg.solve(t.T, (t @ model.A).T).T
    c_bb = np.linalg.solve(t.T, model.C.T).T
    return StateSpace(A=a_bb, B=t @ model.B, C=c_bb)


def random_similarity(n: int, cond_max: float, rng: np.random.Generator) -> np.ndarray:
    """Random n x n transform whose condition number is at most ``cond_max``.

    Built from two random orthogonal factors and singular values drawn
    log-uniformly in [1, cond_max], so the conditioning bound holds by
    construction.
    """
    if cond_max <= 1.0:
        raise ValueError(f"cond_max must exceed 1, got {cond_max}")
    q1, _ = np.linalg.qr(rng.standard_normal((n, n)))
    q2, _ = np.linalg.qr(rng.standard_normal((n, n)))
    singular_values = np.exp(rng.uniform(0.0, np.log(cond_max), size=n))
    return (q1 * singular_values) @ q2.T


def generate_instance(
    structure: AffineStructure,
    theta: np.ndarray,
    seed: int | np.random.Generator = 0,
    cond_max: float = 100.0,
) -> Instance:
    """Build a synthetic black-box/truth pair with a hidden random transform.

    Deterministic for a given seed.  The black-box triple is the structured
    model at ``theta`` seen through a random similarity transform with
    condition number at most ``cond_max``.
    """
    rng = np.random.default_rng(seed)
    truth = eval_structure(structure, theta)
    t = random_similarity(structure.dims.n_x, cond_max, rng)
    return Instance(blackbox=apply_similarity(truth, t), truth=truth, T=t)


def residuals(blackbox: StateSpace, t: np.ndarray, structured: StateSpace) -> Residuals:
    """Frobenius norms of the three similarity-equation residuals.

    Zero exactly when ``(structured, t)`` reproduces the black-box triple.
    """
    n_x = blackbox.dims.n_x
    t = _as_matrix(t, n_x, n_x, "T")
    if structured.dims != blackbox.dims:
        raise ValueError(
            f"dimension mismatch: black-box {blackbox.dims} vs structured {structured.dims}"
        )
    r_a = np.linalg.norm(blackbox.A @ t - t @ structured.A)
    r_b = np.linalg.norm(blackbox.B - t @ structured.B)
    r_c = np.linalg.norm(blackbox.C @ t - structured.C)
    return Residuals(float(r_a), float(r_b), float(r_c))
