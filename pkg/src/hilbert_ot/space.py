"""Discrete measures on a metric space, ball masses and cost matrices."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "DiscreteMeasure",
    "CostSpec",
    "tail_mass",
    "tail_mass_ge",
    "breakpoints",
    "cost_matrix",
    "load_measure",
    "uniform_grid",
    "truncated_gaussian",
]

_RENORM_WARN = 1e-9
_TRIANGLE_TOL = 1e-9
_MAX_EXHAUSTIVE_TRIPLES = 60


def _normalize_weights(weights):
    w = np.asarray(weights, dtype=float).ravel()
    if w.size == 0:
        raise ValueError("a measure needs at least one atom")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ValueError("weights must be finite and strictly positive")
    total = w.sum()
    if abs(total - 1.0) > _RENORM_WARN:
        warnings.warn(
            f"weights summed to {total!r}; renormalized to 1", stacklevel=3
        )
    return w / total


def _check_distance_matrix(D, rng=None):
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError("distance matrix must be square")
    if not np.all(np.isfinite(D)) or np.any(D < 0):
        raise ValueError("distance matrix entries must be finite and >= 0")
    if not np.allclose(D, D.T, rtol=0, atol=1e-12):
        raise ValueError("distance matrix must be symmetric")
    if np.any(np.abs(np.diag(D)) > 1e-12):
        raise ValueError("distance matrix must have a zero diagonal")
    n = D.shape[0]
    scale = max(1.0, float(D.max(initial=0.0)))
    if n <= _MAX_EXHAUSTIVE_TRIPLES:
        # d(i,k) <= d(i,j) + d(j,k) for all i, j, k
        viol = D[:, None, :] - (D[:, :, None] + D[None, :, :])
        worst = float(viol.max())
    else:
        rng = np.random.default_rng(0) if rng is None else rng
        idx = rng.integers(0, n, size=(20000, 3))
        i, j, k = idx.T
        worst = float((D[i, k] - D[i, j] - D[j, k]).max())
    if worst > _TRIANGLE_TOL * scale:
        raise ValueError(f"distance matrix violates the triangle inequality by {worst:g}")
    return D


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finite weighted point set with a distinguished base point.

    Exactly one geometry backend is used: coordinates (``points`` plus a
    ``base_point`` vector, Euclidean metric), a symmetric ``distance_matrix``
    plus ``base_index``, or -- for product spaces -- only the radii
    ``dist_from_base`` (then no pairwise costs are available).

    Weights are normalized to sum to one at construction; all derived tables
    are computed once and the arrays are made read-only.
    """

    weights: np.ndarray
    points: np.ndarray | None = None
    base_point: np.ndarray | None = None
    distance_matrix: np.ndarray | None = None
    base_index: int | None = None
    dist_from_base: np.ndarray = field(default=None)

    def __post_init__(self):
        set_ = object.__setattr__
        w = _normalize_weights(self.weights)
        set_(self, "weights", w)
        n = w.size
        if self.points is not None:
            pts = np.asarray(self.points, dtype=float)
            if pts.ndim == 1:
                pts = pts[:, None]
            if pts.shape[0] != n:
                raise ValueError("points and weights have different lengths")
            x0 = np.zeros(pts.shape[1]) if self.base_point is None else np.asarray(self.base_point, float).ravel()
            if x0.size != pts.shape[1]:
                raise ValueError("base_point dimension does not match the points")
            set_(self, "points", pts)
            set_(self, "base_point", x0)
            r = np.linalg.norm(pts - x0, axis=1)
        elif self.distance_matrix is not None:
            D = _check_distance_matrix(self.distance_matrix)
            if D.shape[0] != n:
                raise ValueError("distance matrix and weights have different sizes")
            b = 0 if self.base_index is None else int(self.base_index)
            if not 0 <= b < n:
                raise ValueError("base_index out of range")
            set_(self, "distance_matrix", D)
            set_(self, "base_index", b)
            r = D[b].copy()
        elif self.dist_from_base is not None:
            r = np.asarray(self.dist_from_base, dtype=float).ravel()
            if r.size != n:
                raise ValueError("dist_from_base and weights have different lengths")
        else:
            raise ValueError("need points, a distance matrix or radii")
        if not np.all(np.isfinite(r)) or np.any(r < 0):
            raise ValueError("distances from the base point must be finite and >= 0")
        set_(self, "dist_from_base", r)
        radii = np.unique(r)
        set_(self, "_radii", radii)
        # mass strictly beyond each distinct radius, and mass at >= each radius
        order = np.searchsorted(radii, r)
        mass_at = np.bincount(order, weights=w, minlength=radii.size)
        ge = np.cumsum(mass_at[::-1])[::-1]
        set_(self, "_mass_ge", ge)
        for name in ("weights", "points", "base_point", "distance_matrix", "dist_from_base", "_radii", "_mass_ge"):
            arr = getattr(self, name)
            if isinstance(arr, np.ndarray):
                arr.setflags(write=False)

    @property
    def n(self):
        return self.weights.size

    def __len__(self):
        return self.weights.size

    @property
    def radii(self):
        """Sorted distinct distances from the base point."""
        return self._radii

    @property
    def max_radius(self):
        return float(self._radii[-1])

    def ball_mass(self, r):
        """Mass of the closed ball ``B_r``."""
        return 1.0 - tail_mass(self, r)

    def ball_mask(self, r):
        return self.dist_from_base <= r

    @classmethod
    def from_radii(cls, radii, weights):
        """Radial-only measure (used for product spaces)."""
        return cls(weights=weights, dist_from_base=radii)

    def to_dict(self):
        if self.points is not None:
            return {
                "points": self.points.tolist(),
                "weights": self.weights.tolist(),
                "base_point": self.base_point.tolist(),
            }
        if self.distance_matrix is not None:
            return {
                "distance_matrix": self.distance_matrix.tolist(),
                "weights": self.weights.tolist(),
                "base_index": self.base_index,
            }
        raise ValueError("radial-only measures have no file representation")


def _as_array(r):
    return np.asarray(r, dtype=float)


def tail_mass(m, r):
    """``m(B_r^c)``: mass of atoms strictly farther than ``r`` from the base point.

    Vectorized in ``r``; right-continuous and non-increasing.
    """
    r = _as_array(r)
    if np.any(r < 0):
        raise ValueError("radius must be >= 0")
    idx = np.searchsorted(m._radii, r, side="right")
    ge = np.append(m._mass_ge, 0.0)
    out = ge[idx]
    return float(out) if out.ndim == 0 else out


def tail_mass_ge(m, r):
    """Mass of atoms at distance ``>= r`` (left limit of :func:`tail_mass`)."""
    r = _as_array(r)
    idx = np.searchsorted(m._radii, r, side="left")
    ge = np.append(m._mass_ge, 0.0)
    out = ge[idx]
    return float(out) if out.ndim == 0 else out


def breakpoints(m, threshold):
    """Distinct distances strictly greater than ``threshold``, sorted.

    These are exactly the radii past ``threshold`` at which ``B_r^c`` shrinks.
    """
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    radii = m._radii
    return radii[radii > threshold].copy()


@dataclass(frozen=True)
class CostSpec:
    """Cost variant: ``power_distance`` (``scale * d**exponent``), ``zero`` or ``matrix``."""

    variant: str = "power_distance"
    exponent: float = 2.0
    scale: float = 1.0
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.variant not in ("power_distance", "zero", "matrix"):
            raise ValueError(f"unknown cost variant {self.variant!r}")
        if self.variant == "power_distance" and (self.exponent <= 0 or self.scale < 0):
            raise ValueError("power_distance needs exponent > 0 and scale >= 0")
        if self.variant == "matrix":
            if self.matrix is None:
                raise ValueError("matrix cost needs a matrix")
            M = np.asarray(self.matrix, dtype=float)
            if not np.all(np.isfinite(M)):
                raise ValueError("cost matrix must be finite")
            if np.any(M < 0):
                raise ValueError("cost matrix has negative entries")
            object.__setattr__(self, "matrix", M)

    @property
    def symmetric(self):
        if self.variant == "matrix":
            M = self.matrix
            return M.shape[0] == M.shape[1] and np.allclose(M, M.T)
        return True

    @classmethod
    def from_dict(cls, d, base_dir=None):
        d = dict(d)
        variant = d.pop("variant", "power_distance")
        if variant == "matrix":
            if "file" in d:
                path = Path(d["file"])
                if base_dir is not None and not path.is_absolute():
                    path = Path(base_dir) / path
                with open(path) as fh:
                    payload = json.load(fh)
                mat = payload["matrix"] if isinstance(payload, dict) else payload
            else:
                mat = d["matrix"]
            return cls(variant="matrix", matrix=np.asarray(mat, dtype=float))
        if variant == "zero":
            return cls(variant="zero")
        return cls(variant=variant, exponent=float(d.get("exponent", 2.0)), scale=float(d.get("scale", 1.0)))


def _pairwise_distances(mx, my):
    if mx.points is not None and my.points is not None:
        if mx.points.shape[1] != my.points.shape[1]:
            raise ValueError("measures live in spaces of different dimension")
        diff = mx.points[:, None, :] - my.points[None, :, :]
        return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    if mx.distance_matrix is not None and (my is mx or my.distance_matrix is mx.distance_matrix):
        return np.array(mx.distance_matrix)
    raise ValueError("pairwise distances need coordinates for both measures or one shared distance matrix")


def cost_matrix(spec, mx, my):
    """Matrix ``C[i, j] = c(x_i, y_j) >= 0``."""
    if spec.variant == "zero":
        return np.zeros((mx.n, my.n))
    if spec.variant == "matrix":
        M = spec.matrix
        if M.shape != (mx.n, my.n):
            raise ValueError(f"cost matrix has shape {M.shape}, expected {(mx.n, my.n)}")
        return np.array(M)
    D = _pairwise_distances(mx, my)
    return spec.scale * D ** spec.exponent


def load_measure(source):
    """Load a measure from a JSON file path or an already-parsed dict."""
    if isinstance(source, (str, Path)):
        with open(source) as fh:
            payload = json.load(fh)
    else:
        payload = source
    if "points" in payload:
        return DiscreteMeasure(
            weights=payload["weights"],
            points=payload["points"],
            base_point=payload.get("base_point"),
        )
    if "distance_matrix" in payload:
        return DiscreteMeasure(
            weights=payload["weights"],
            distance_matrix=payload["distance_matrix"],
            base_index=payload.get("base_index", 0),
        )
    raise ValueError("measure file needs 'points' or 'distance_matrix'")


def uniform_grid(n, low=-1.0, high=1.0, base_point=0.0):
    """``n`` equally weighted atoms on an equispaced 1-d grid."""
    pts = np.linspace(low, high, n)
    return DiscreteMeasure(weights=np.full(n, 1.0 / n), points=pts[:, None], base_point=[base_point])


def truncated_gaussian(n, sigma=1.0, radius=3.0, seed=0, center=0.0, jitter=0.25):
    """Seeded discretization of a centered 1-d Gaussian truncated to ``[-radius, radius]``.

    Atoms sit on an equispaced grid perturbed by a seeded uniform jitter of at
    most ``jitter`` grid spacings; weights are proportional to the Gaussian
    density at the atoms. The base point is the center.
    """
    rng = np.random.default_rng(seed)
    grid = np.linspace(-radius, radius, n)
    if n > 1 and jitter > 0:
        h = grid[1] - grid[0]
        grid = grid + rng.uniform(-jitter * h, jitter * h, size=n)
        grid = np.clip(grid, -radius, radius)
    grid = np.sort(grid)
    w = np.exp(-0.5 * (grid / sigma) ** 2)
    return DiscreteMeasure(weights=w / w.sum(), points=(grid + center)[:, None], base_point=[center])
