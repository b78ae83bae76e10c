"""Convex domains with a Dirichlet/Neumann boundary split, and their lattices.

A :class:`DomainSpec` describes the closed domain and labels each boundary
piece Dirichlet or Neumann. :func:`build_grid` samples it on a uniform
lattice of spacing ``delta``; :func:`neighborhoods` precomputes the lattice
trace of the closed balls of radius ``eps`` around every node. Nothing
special happens at Neumann faces: balls are simply clipped to the nodes
that exist, which is how the scheme sees the reflecting boundary.
"""

from __future__ import annotations

import hashlib
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

logger = logging.getLogger(__name__)

INTERIOR = 0
NEUMANN_FACE = 1
DIRICHLET_COLLAR = 2
CLASS_NAMES = {INTERIOR: "interior", NEUMANN_FACE: "neumann_face", DIRICHLET_COLLAR: "dirichlet_collar"}

SHAPES = ("box", "ball", "polytope", "polygon")

# relative slack for "on the boundary" and for ties at distance exactly eps
_GEOM_RTOL = 1e-9


class DomainError(ValueError):
    """Invalid domain description. ``errors`` lists every problem found."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# ---------------------------------------------------------------- facets


class _BoxFace:
    def __init__(self, axis, value, lower, upper):
        self.axis = axis
        self.value = value
        self.lower = np.asarray(lower, float)
        self.upper = np.asarray(upper, float)

    def project(self, pts):
        proj = np.clip(pts, self.lower, self.upper)
        proj[:, self.axis] = self.value
        # exact for points inside the box
        dist = np.abs(pts[:, self.axis] - self.value)
        outside = np.any((pts < self.lower) | (pts > self.upper), axis=1)
        if outside.any():
            dist[outside] = np.linalg.norm(pts[outside] - proj[outside], axis=1)
        return proj, dist


class _Sphere:
    def __init__(self, center, radius):
        self.center = np.asarray(center, float)
        self.radius = float(radius)

    def project(self, pts):
        rel = pts - self.center
        r = np.linalg.norm(rel, axis=1)
        direction = np.zeros_like(rel)
        ok = r > 0
        direction[ok] = rel[ok] / r[ok, None]
        direction[~ok, 0] = 1.0
        return self.center + self.radius * direction, np.abs(self.radius - r)


class _Point:
    def __init__(self, point):
        self.point = np.asarray(point, float)

    def project(self, pts):
        proj = np.broadcast_to(self.point, pts.shape).copy()
        return proj, np.linalg.norm(pts - proj, axis=1)


def _segment_project(pts, a, b):
    ab = b - a
    t = np.clip(((pts - a) @ ab) / (ab @ ab), 0.0, 1.0)
    proj = a + t[:, None] * ab
    return proj, np.linalg.norm(pts - proj, axis=1)


class _Segment:
    def __init__(self, a, b):
        self.a = np.asarray(a, float)
        self.b = np.asarray(b, float)

    def project(self, pts):
        return _segment_project(pts, self.a, self.b)


class _PlanarPolygon:
    """Convex polygon embedded in 3D, vertices ordered around its normal."""

    def __init__(self, vertices, normal):
        self.vertices = np.asarray(vertices, float)
        self.normal = np.asarray(normal, float) / np.linalg.norm(normal)

    def project(self, pts):
        v = self.vertices
        n = self.normal
        q = pts - ((pts - v[0]) @ n)[:, None] * n
        inside = np.ones(len(pts), bool)
        m = len(v)
        scale = max(1.0, float(np.abs(v).max()))
        for i in range(m):
            a, b = v[i], v[(i + 1) % m]
            side = np.cross(b - a, q - a) @ n
            inside &= side >= -_GEOM_RTOL * scale
        proj = q.copy()
        dist = np.linalg.norm(pts - q, axis=1)
        out = ~inside
        if out.any():
            best_p = None
            best_d = None
            for i in range(m):
                p, d = _segment_project(pts[out], v[i], v[(i + 1) % m])
                if best_d is None:
                    best_p, best_d = p, d
                else:
                    closer = d < best_d
                    best_p[closer] = p[closer]
                    best_d[closer] = d[closer]
            proj[out] = best_p
            dist[out] = best_d
        return proj, dist


class _Empty:
    def project(self, pts):
        return np.full_like(pts, np.nan), np.full(len(pts), np.inf)


# ---------------------------------------------------------------- spec


@dataclass(frozen=True)
class DomainSpec:
    """Closed convex domain plus a Dirichlet/Neumann labeling of its boundary.

    Boundary labels by shape: box faces are ``"x1-"``, ``"x1+"``, ``"x2-"``...;
    the ball has the single piece ``"sphere"``; polytope facets and polygon
    edges are numbered ``"0"``, ``"1"``, ... in input order. A polytope is
    the set ``{x : normals @ x <= offsets}``.
    """

    dimension: int
    shape: str
    dirichlet: tuple[str, ...]
    neumann: tuple[str, ...] = ()
    lower: tuple[float, ...] | None = None
    upper: tuple[float, ...] | None = None
    center: tuple[float, ...] | None = None
    radius: float | None = None
    normals: tuple[tuple[float, ...], ...] | None = None
    offsets: tuple[float, ...] | None = None
    vertices: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "dirichlet", tuple(str(s) for s in self.dirichlet))
        object.__setattr__(self, "neumann", tuple(str(s) for s in self.neumann))
        # plain floats keep repr-based hashes independent of how the DomainSpec was built
        for name in ("lower", "upper", "center", "offsets"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, tuple(float(v) for v in val))
        for name in ("normals", "vertices"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, tuple(tuple(float(v) for v in row) for row in val))
        if self.radius is not None:
            object.__setattr__(self, "radius", float(self.radius))
        errors = self._validate()
        if errors:
            raise DomainError(errors)

    # -- constructors

    @classmethod
    def box(cls, lower, upper, neumann=(), dirichlet=None) -> DomainSpec:
        lower = tuple(float(v) for v in np.atleast_1d(lower))
        upper = tuple(float(v) for v in np.atleast_1d(upper))
        faces = [f"x{i + 1}{s}" for i in range(len(lower)) for s in "-+"]
        neumann = tuple(neumann)
        if dirichlet is None:
            dirichlet = tuple(f for f in faces if f not in neumann)
        return cls(len(lower), "box", tuple(dirichlet), neumann, lower=lower, upper=upper)

    @classmethod
    def ball(cls, center, radius) -> DomainSpec:
        center = tuple(float(v) for v in np.atleast_1d(center))
        return cls(len(center), "ball", ("sphere",), (), center=center, radius=float(radius))

    @classmethod
    def polytope(cls, normals, offsets, neumann=(), dirichlet=None) -> DomainSpec:
        normals = tuple(tuple(float(v) for v in row) for row in np.atleast_2d(normals))
        offsets = tuple(float(v) for v in np.atleast_1d(offsets))
        neumann = tuple(str(s) for s in neumann)
        if dirichlet is None:
            dirichlet = tuple(str(i) for i in range(len(offsets)) if str(i) not in neumann)
        return cls(len(normals[0]), "polytope", tuple(dirichlet), neumann, normals=normals, offsets=offsets)

    @classmethod
    def polygon(cls, vertices, neumann=(), dirichlet=None) -> DomainSpec:
        vertices = tuple(tuple(float(v) for v in row) for row in vertices)
        neumann = tuple(str(s) for s in neumann)
        if dirichlet is None:
            dirichlet = tuple(str(i) for i in range(len(vertices)) if str(i) not in neumann)
        return cls(2, "polygon", tuple(dirichlet), neumann, vertices=vertices)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> DomainSpec:
        """Build from the JSON ``domain`` block (``delta`` is ignored here)."""
        errors = domain_dict_errors(data)
        if errors:
            raise DomainError(errors)
        shape = data["shape"]
        kw = dict(dirichlet=tuple(str(s) for s in data.get("dirichlet", ())),
                  neumann=tuple(str(s) for s in data.get("neumann", ())))
        d = int(data["dimension"])
        if shape == "box":
            bounds = np.asarray(data["bounds"], float).reshape(d, 2)
            return cls(d, shape, lower=tuple(bounds[:, 0]), upper=tuple(bounds[:, 1]), **kw)
        if shape == "ball":
            return cls(d, shape, center=tuple(map(float, data["center"])), radius=float(data["radius"]), **kw)
        if shape == "polytope":
            hs = data["halfspaces"]
            return cls(d, shape, normals=tuple(tuple(map(float, h["normal"])) for h in hs),
                       offsets=tuple(float(h["offset"]) for h in hs), **kw)
        return cls(d, shape, vertices=tuple(tuple(map(float, v)) for v in data["vertices"]), **kw)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"dimension": self.dimension, "shape": self.shape,
                               "dirichlet": list(self.dirichlet), "neumann": list(self.neumann)}
        if self.shape == "box":
            out["bounds"] = [[lo, hi] for lo, hi in zip(self.lower, self.upper)]
        elif self.shape == "ball":
            out["center"] = list(self.center)
            out["radius"] = self.radius
        elif self.shape == "polytope":
            out["halfspaces"] = [{"normal": list(n), "offset": b} for n, b in zip(self.normals, self.offsets)]
        else:
            out["vertices"] = [list(v) for v in self.vertices]
        return out

    # -- validation

    def _validate(self) -> list[str]:
        errors = []
        if self.dimension not in (1, 2, 3):
            errors.append(f"dimension must be 1, 2 or 3, got {self.dimension}")
            return errors
        if self.shape not in SHAPES:
            errors.append(f"unknown shape {self.shape!r}")
            return errors
        d = self.dimension
        if self.shape == "box":
            if self.lower is None or self.upper is None or len(self.lower) != d or len(self.upper) != d:
                errors.append("box needs lower and upper corners of the stated dimension")
            elif not all(lo < hi for lo, hi in zip(self.lower, self.upper)):
                errors.append("box corners must satisfy lower < upper componentwise")
        elif self.shape == "ball":
            if self.center is None or len(self.center) != d:
                errors.append("ball needs a center of the stated dimension")
            if self.radius is None or not self.radius > 0:
                errors.append("ball radius must be positive")
        elif self.shape == "polytope":
            if not self.normals or self.offsets is None or len(self.normals) != len(self.offsets):
                errors.append("polytope needs matching lists of normals and offsets")
            elif any(len(n) != d for n in self.normals):
                errors.append("polytope normals must have the stated dimension")
            elif any(not np.any(n) for n in self.normals):
                errors.append("polytope normals must be nonzero")
            else:
                errors.extend(_polytope_errors(np.asarray(self.normals), np.asarray(self.offsets)))
        else:
            if d != 2:
                errors.append("polygon domains are two-dimensional")
            elif self.vertices is None or len(self.vertices) < 3 or any(len(v) != 2 for v in self.vertices):
                errors.append("polygon needs at least three 2D vertices")
            elif abs(_signed_area(np.asarray(self.vertices))) <= 0:
                errors.append("polygon has empty interior")
        if errors:
            return errors

        labels = set(self.boundary_labels())
        dset, nset = set(self.dirichlet), set(self.neumann)
        if not dset:
            errors.append("Dirichlet part must be nonempty")
        for lab in sorted((dset | nset) - labels):
            errors.append(f"unknown boundary label {lab!r} (valid: {', '.join(self.boundary_labels())})")
        for lab in sorted(dset & nset):
            errors.append(f"boundary piece {lab!r} is labeled both Dirichlet and Neumann")
        for lab in self.boundary_labels():
            if lab not in dset and lab not in nset:
                errors.append(f"boundary piece {lab!r} is unlabeled")
        if nset and not self.is_convex():
            errors.append("Neumann faces require a convex domain")
        return errors

    def boundary_labels(self) -> list[str]:
        if self.shape == "box":
            return [f"x{i + 1}{s}" for i in range(self.dimension) for s in "-+"]
        if self.shape == "ball":
            return ["sphere"]
        if self.shape == "polytope":
            return [str(i) for i in range(len(self.offsets))]
        return [str(i) for i in range(len(self.vertices))]

    def is_convex(self) -> bool:
        if self.shape != "polygon":
            return True
        v = np.asarray(self.vertices, float)
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        scale = float(np.abs(e).max()) ** 2
        return bool(np.all(cross >= -_GEOM_RTOL * scale) or np.all(cross <= _GEOM_RTOL * scale))

    # -- geometry

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        if self.shape == "box":
            return np.array(self.lower), np.array(self.upper)
        if self.shape == "ball":
            c = np.array(self.center)
            return c - self.radius, c + self.radius
        v = self.corner_points()
        return v.min(axis=0), v.max(axis=0)

    def corner_points(self) -> np.ndarray:
        """Vertices of the domain (box corners, polytope/polygon vertices)."""
        if self.shape == "box":
            return np.array(list(itertools.product(*zip(self.lower, self.upper))), float)
        if self.shape == "polytope":
            return _polytope_vertices(np.asarray(self.normals), np.asarray(self.offsets))
        if self.shape == "polygon":
            return np.asarray(self.vertices, float)
        raise ValueError("a ball has no corner points")

    def diameter(self) -> float:
        if self.shape == "ball":
            return 2.0 * self.radius
        v = self.corner_points()
        diff = v[:, None, :] - v[None, :, :]
        return float(np.sqrt((diff ** 2).sum(-1)).max())

    def inradius(self) -> float:
        if self.shape == "box":
            return 0.5 * min(hi - lo for lo, hi in zip(self.lower, self.upper))
        if self.shape == "ball":
            return self.radius
        if self.shape == "polytope":
            return _chebyshev_radius(np.asarray(self.normals), np.asarray(self.offsets))
        return _polygon_inradius(np.asarray(self.vertices, float))

    def contains(self, pts: np.ndarray, tol: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, float))
        if self.shape == "box":
            return np.all((pts >= np.array(self.lower) - tol) & (pts <= np.array(self.upper) + tol), axis=1)
        if self.shape == "ball":
            return np.linalg.norm(pts - np.array(self.center), axis=1) <= self.radius + tol
        if self.shape == "polytope":
            a = np.asarray(self.normals)
            a_norm = np.linalg.norm(a, axis=1)
            return np.all(pts @ a.T <= np.asarray(self.offsets) + tol * a_norm, axis=1)
        v = np.asarray(self.vertices, float)
        inside = _points_in_polygon(pts, v)
        if tol > 0:
            near = np.min([_segment_project(pts, v[i], v[(i + 1) % len(v)])[1] for i in range(len(v))], axis=0)
            inside |= near <= tol
        return inside

    def facets(self) -> dict[str, Any]:
        """Map boundary label to a facet object with ``project(points)``."""
        d = self.dimension
        if self.shape == "box":
            out = {}
            for i in range(d):
                out[f"x{i + 1}-"] = _BoxFace(i, self.lower[i], self.lower, self.upper)
                out[f"x{i + 1}+"] = _BoxFace(i, self.upper[i], self.lower, self.upper)
            return out
        if self.shape == "ball":
            return {"sphere": _Sphere(self.center, self.radius)}
        if self.shape == "polygon":
            v = np.asarray(self.vertices, float)
            return {str(i): _Segment(v[i], v[(i + 1) % len(v)]) for i in range(len(v))}
        a = np.asarray(self.normals, float)
        b = np.asarray(self.offsets, float)
        verts = _polytope_vertices(a, b)
        scale = max(1.0, float(np.abs(verts).max()))
        out = {}
        for i in range(len(b)):
            on = np.abs(verts @ a[i] - b[i]) <= 1e-9 * scale * np.linalg.norm(a[i])
            fv = verts[on]
            out[str(i)] = _make_facet(fv, a[i], d)
        return out

    def boundary_projection(self, pts: np.ndarray, labels: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        """Nearest point on the union of the labeled pieces, and its distance.

        Ties (equal distance up to rounding) go to the lexicographically
        smallest candidate point.
        """
        pts = np.atleast_2d(np.asarray(pts, float))
        n = len(pts)
        best_p = np.full((n, self.dimension), np.nan)
        best_d = np.full(n, np.inf)
        if not labels:
            return best_p, best_d
        facets = self.facets()
        tie = _GEOM_RTOL * max(1.0, self.diameter()) * 1e-3
        for lab in labels:
            p, dist = facets[lab].project(pts)
            closer = dist < best_d - tie
            tied = (np.abs(dist - best_d) <= tie) & _lex_less(p, best_p)
            take = closer | tied
            best_p[take] = p[take]
            best_d[take] = dist[take]
        return best_p, best_d


def _make_facet(fv: np.ndarray, normal: np.ndarray, d: int):
    if len(fv) == 0:
        return _Empty()
    if d == 1:
        return _Point(fv[0])
    if d == 2:
        if len(fv) == 1:
            return _Point(fv[0])
        direction = np.array([-normal[1], normal[0]])
        t = fv @ direction
        return _Segment(fv[np.argmin(t)], fv[np.argmax(t)])
    if len(fv) < 3:
        if len(fv) == 1:
            return _Point(fv[0])
        return _Segment(fv[0], fv[1])
    n = normal / np.linalg.norm(normal)
    e1 = fv[1] - fv[0]
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    c = fv.mean(axis=0)
    ang = np.arctan2((fv - c) @ e2, (fv - c) @ e1)
    return _PlanarPolygon(fv[np.argsort(ang)], n)


def _lex_less(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise lexicographic a < b; NaN rows in b count as +infinity."""
    less = np.zeros(len(a), bool)
    undecided = np.ones(len(a), bool)
    for c in range(a.shape[1]):
        bc = np.where(np.isnan(b[:, c]), np.inf, b[:, c])
        less |= undecided & (a[:, c] < bc)
        undecided &= a[:, c] == bc
    return less


def _signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _points_in_polygon(pts: np.ndarray, v: np.ndarray) -> np.ndarray:
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), bool)
    m = len(v)
    for i in range(m):
        x1, y1 = v[i]
        x2, y2 = v[(i + 1) % m]
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < xint)
    return inside


def _polygon_inradius(v: np.ndarray) -> float:
    """Largest inscribed disc radius, estimated on a fine sample of the polygon."""
    lo, hi = v.min(axis=0), v.max(axis=0)
    h = float((hi - lo).max()) / 200.0
    xs = np.arange(lo[0], hi[0] + h, h)
    ys = np.arange(lo[1], hi[1] + h, h)
    pts = np.stack(np.meshgrid(xs, ys, indexing="ij"), -1).reshape(-1, 2)
    pts = pts[_points_in_polygon(pts, v)]
    if len(pts) == 0:
        return 0.0
    dist = np.min([_segment_project(pts, v[i], v[(i + 1) % len(v)])[1] for i in range(len(v))], axis=0)
    return float(dist.max())


def _polytope_vertices(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = a.shape[1]
    scale = max(1.0, float(np.abs(b).max()))
    verts = []
    for rows in itertools.combinations(range(len(b)), d):
        sub = a[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        x = np.linalg.solve(sub, b[list(rows)])
        if np.all(a @ x <= b + 1e-9 * scale * np.linalg.norm(a, axis=1)):
            if not any(np.allclose(x, w, atol=1e-9 * scale) for w in verts):
                verts.append(x)
    return np.array(verts, float).reshape(-1, d)


def _chebyshev_radius(a: np.ndarray, b: np.ndarray) -> float:
    from scipy.optimize import linprog

    d = a.shape[1]
    norms = np.linalg.norm(a, axis=1)
    c = np.zeros(d + 1)
    c[-1] = -1.0
    res = linprog(c, A_ub=np.hstack([a, norms[:, None]]), b_ub=b,
                  bounds=[(None, None)] * d + [(0, None)], method="highs")
    if res.status != 0:
        return math.inf if res.status == 3 else 0.0
    return float(res.x[-1])


def _polytope_errors(a: np.ndarray, b: np.ndarray) -> list[str]:
    from scipy.optimize import linprog

    d = a.shape[1]
    for i in range(d):
        for sign in (1.0, -1.0):
            c = np.zeros(d)
            c[i] = -sign
            res = linprog(c, A_ub=a, b_ub=b, bounds=[(None, None)] * d, method="highs")
            if res.status == 3:
                return ["polytope is unbounded"]
            if res.status == 2:
                return ["polytope is empty"]
    if _chebyshev_radius(a, b) <= 1e-12:
        return ["polytope has empty interior"]
    return []


def domain_dict_errors(data: Any) -> list[str]:
    """Every structural problem in a JSON ``domain`` block (empty if fine)."""
    if not isinstance(data, dict):
        return ["domain must be an object"]
    allowed = {"dimension", "shape", "bounds", "center", "radius", "halfspaces", "vertices",
               "dirichlet", "neumann", "delta"}
    errors = [f"domain: unknown key {k!r}" for k in sorted(set(data) - allowed)]
    shape = data.get("shape")
    if shape not in SHAPES:
        errors.append(f"domain.shape must be one of {', '.join(SHAPES)}")
    if not isinstance(data.get("dimension"), int) or data.get("dimension") not in (1, 2, 3):
        errors.append("domain.dimension must be 1, 2 or 3")
    need = {"box": ["bounds"], "ball": ["center", "radius"], "polytope": ["halfspaces"], "polygon": ["vertices"]}
    for key in need.get(shape, []):
        if key not in data:
            errors.append(f"domain.{key} is required for shape {shape!r}")
    if shape == "box" and "bounds" in data and isinstance(data.get("dimension"), int):
        try:
            arr = np.asarray(data["bounds"], float)
            if arr.shape != (data["dimension"], 2):
                errors.append("domain.bounds must be a list of [lower, upper] pairs, one per dimension")
        except (TypeError, ValueError):
            errors.append("domain.bounds must be numeric")
    if shape == "polytope" and isinstance(data.get("halfspaces"), list):
        for i, h in enumerate(data["halfspaces"]):
            if not isinstance(h, dict) or set(h) != {"normal", "offset"}:
                errors.append(f"domain.halfspaces[{i}] must have exactly the keys normal, offset")
    for key in ("dirichlet", "neumann"):
        if key in data and not isinstance(data[key], list):
            errors.append(f"domain.{key} must be a list of boundary labels")
    return errors


# ---------------------------------------------------------------- grid


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Grid:
    """Lattice nodes of the closed domain, in lexicographic coordinate order."""

    spec: DomainSpec
    delta: float
    anchor: np.ndarray
    index: np.ndarray
    coords: np.ndarray
    dist_dirichlet: np.ndarray
    dist_neumann: np.ndarray
    nearest_dirichlet: np.ndarray
    node_class: np.ndarray
    diameter: float
    _lookup: dict = field(default_factory=dict, repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.coords)

    @property
    def dimension(self) -> int:
        return self.spec.dimension

    @property
    def tie_tol(self) -> float:
        return _GEOM_RTOL * self.delta

    def grid_hash(self) -> str:
        h = hashlib.sha256()
        h.update(repr((self.spec.to_dict(), self.delta)).encode())
        h.update(np.ascontiguousarray(self.index).tobytes())
        return h.hexdigest()[:16]

    def classify(self, eps: float | None = None) -> np.ndarray:
        """Node classes; with ``eps`` given, collar nodes override the base class."""
        cls = np.array(self.node_class)
        if eps is not None:
            cls[~self.omega_mask(eps)] = DIRICHLET_COLLAR
        return cls

    def omega_mask(self, eps: float) -> np.ndarray:
        return self.dist_dirichlet > eps + self.tie_tol

    def dense_lookup(self) -> tuple[np.ndarray, np.ndarray]:
        """``(offset, table)`` with ``table[idx - offset] == node id`` or -1."""
        if "dense" not in self._lookup:
            lo = self.index.min(axis=0)
            shape = tuple(self.index.max(axis=0) - lo + 1)
            table = np.full(shape, -1, dtype=np.int64)
            table[tuple((self.index - lo).T)] = np.arange(self.n_nodes)
            self._lookup["dense"] = (lo, _readonly(table))
        return self._lookup["dense"]

    def node_at(self, point: Sequence[float]) -> int:
        """Id of the node at ``point`` (must be a lattice point of this grid)."""
        idx = np.rint((np.asarray(point, float) - self.anchor) / self.delta).astype(np.int64)
        lo, table = self.dense_lookup()
        rel = idx - lo
        if np.any(rel < 0) or np.any(rel >= table.shape):
            raise KeyError(f"no node at {tuple(point)}")
        nid = int(table[tuple(rel)])
        if nid < 0 or not np.allclose(self.coords[nid], point, atol=1e-9 * self.delta):
            raise KeyError(f"no node at {tuple(point)}")
        return nid


def build_grid(spec: DomainSpec, delta: float) -> Grid:
    """Sample ``spec`` on the lattice ``anchor + delta * Z^d``.

    The anchor is the box lower corner, the ball center, or the lower corner
    of the bounding box for polytopes and polygons.
    """
    delta = float(delta)
    if not delta > 0:
        raise DomainError([f"delta must be positive, got {delta}"])
    # delta equal to the inradius is allowed (the 3x3 unit-square lattice)
    if delta > spec.inradius() * (1 + _GEOM_RTOL):
        raise DomainError([f"delta={delta} must not exceed the domain inradius {spec.inradius():.6g}"])
    d = spec.dimension
    slack = _GEOM_RTOL * delta

    if spec.shape == "box":
        anchor = np.array(spec.lower, float)
        upper = np.array(spec.upper, float)
        counts = np.floor((upper - anchor) / delta + _GEOM_RTOL).astype(int) + 1
        index = np.stack(np.meshgrid(*[np.arange(c) for c in counts], indexing="ij"), -1).reshape(-1, d)
        coords = np.minimum(anchor + index * delta, upper)
    elif spec.shape == "ball":
        anchor = np.array(spec.center, float)
        m = int(math.floor(spec.radius / delta + _GEOM_RTOL))
        rng = np.arange(-m, m + 1)
        index = np.stack(np.meshgrid(*([rng] * d), indexing="ij"), -1).reshape(-1, d)
        keep = (index ** 2).sum(axis=1) * delta ** 2 <= spec.radius ** 2 * (1 + 1e-12)
        index = index[keep]
        coords = anchor + index * delta
    else:
        lo, hi = spec.bounding_box()
        anchor = lo.astype(float)
        counts = np.floor((hi - lo) / delta + _GEOM_RTOL).astype(int) + 1
        index = np.stack(np.meshgrid(*[np.arange(c) for c in counts], indexing="ij"), -1).reshape(-1, d)
        coords = anchor + index * delta
        keep = spec.contains(coords, tol=slack)
        index, coords = index[keep], coords[keep]

    if len(index) == 0:
        raise DomainError(["the lattice has no nodes inside the domain"])
    order = np.lexsort(index.T[::-1])
    index = np.ascontiguousarray(index[order], dtype=np.int64)
    coords = np.ascontiguousarray(coords[order], dtype=float)

    nearest, dist_d = spec.boundary_projection(coords, spec.dirichlet)
    _, dist_n = spec.boundary_projection(coords, spec.neumann)
    dist_d = np.maximum(dist_d, 0.0)
    node_class = np.full(len(coords), INTERIOR, dtype=np.int8)
    node_class[dist_n <= 0.5 * delta + slack] = NEUMANN_FACE

    return Grid(
        spec=spec,
        delta=delta,
        anchor=_readonly(anchor),
        index=_readonly(index),
        coords=_readonly(coords),
        dist_dirichlet=_readonly(dist_d),
        dist_neumann=_readonly(dist_n),
        nearest_dirichlet=_readonly(nearest),
        node_class=_readonly(node_class),
        diameter=spec.diameter(),
    )


# ---------------------------------------------------------------- balls


@dataclass(frozen=True, eq=False)
class NeighborhoodTable:
    """Lattice trace of the closed balls of one radius around every node.

    ``table[i]`` lists the members of node ``i``'s ball, padded with ``i``
    itself up to the common width; ``counts[i]`` is the true member count.
    """

    grid: Grid
    radius: float
    offsets: np.ndarray
    table: np.ndarray
    counts: np.ndarray
    warnings: tuple[str, ...] = ()

    def members(self, node: int) -> np.ndarray:
        return np.unique(self.table[node])

    def contains(self, node: int, other: int) -> bool:
        return bool(np.any(self.table[node] == other))


def ball_offsets(radius: float, delta: float, d: int) -> np.ndarray:
    """Integer offsets ``m`` with ``|m| * delta <= radius`` (zero offset first)."""
    ratio2 = (radius / delta) ** 2 * (1 + 1e-12)
    m = int(math.floor(radius / delta + _GEOM_RTOL))
    rng = np.arange(-m, m + 1)
    offs = np.stack(np.meshgrid(*([rng] * d), indexing="ij"), -1).reshape(-1, d)
    offs = offs[(offs ** 2).sum(axis=1) <= ratio2]
    norm2 = (offs ** 2).sum(axis=1)
    return np.ascontiguousarray(offs[np.lexsort((*offs.T[::-1], norm2))], dtype=np.int64)


def neighborhoods(grid: Grid, eps: float) -> NeighborhoodTable:
    """Closed-ball neighborhoods of radius ``eps``, clipped to the domain."""
    eps = float(eps)
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    warns = []
    if eps < grid.delta * (1 - _GEOM_RTOL):
        warns.append(f"eps={eps:g} < delta={grid.delta:g}: neighborhoods are singletons")
    elif eps / grid.delta < 3 * (1 - _GEOM_RTOL):
        warns.append(f"eps/delta={eps / grid.delta:.3g} < 3: large ball quadrature error")
    for w in warns:
        logger.debug(w)

    offsets = ball_offsets(eps, grid.delta, grid.dimension)
    lo, dense = grid.dense_lookup()
    n = grid.n_nodes
    self_ids = np.arange(n)
    table = np.empty((n, len(offsets)), dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    shape = np.array(dense.shape)
    for k, off in enumerate(offsets):
        tgt = grid.index + off - lo
        valid = np.all((tgt >= 0) & (tgt < shape), axis=1)
        ids = np.full(n, -1, dtype=np.int64)
        ids[valid] = dense[tuple(tgt[valid].T)]
        found = ids >= 0
        counts += found
        table[:, k] = np.where(found, ids, self_ids)
    return NeighborhoodTable(grid, eps, _readonly(offsets), _readonly(table), _readonly(counts), tuple(warns))


def omega_eps_nodes(grid: Grid, eps: float) -> np.ndarray:
    """Ids of nodes strictly farther than ``eps`` from the Dirichlet boundary."""
    return np.flatnonzero(grid.omega_mask(eps))
