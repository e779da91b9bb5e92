"""Domains, Whitney cube machinery, and boundary-anchored region families.

Domains are half-spaces, balls, ball complements, and regions above a
Lipschitz radial graph, all in dimension >= 2 with the boundary anchor at
the origin convention used throughout: the half space is {x_d > 0}.

The Whitney decomposition walks a global dyadic lattice downward from the
cells covering a window box. A cell is emitted when it is compactly inside
the domain (diam <= dist to the boundary) while its lattice parent is not.
Cells whose status cannot be certified (graph domains give only distance
brackets) and cells touching the window rim are flagged and kept separate
so downstream sums can exclude them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional

import numpy as np

MAX_GENERATION_LIMIT = 40


@dataclass(frozen=True)
class RadialPolyProfile:
    """Height function rho -> sum_k coeffs[k] * rho^(k+1) on [0, span].

    The powers start at 1 so the graph passes through the anchor. The
    Lipschitz constant is the analytic bound sum |c_k| (k+1) span^k.
    """

    coeffs: tuple
    span: float = 1.0

    def height(self, rho):
        rho_arr = np.asarray(rho, dtype=float)
        out = np.zeros_like(rho_arr)
        for k, c in enumerate(self.coeffs):
            out = out + c * rho_arr ** (k + 1)
        return out if isinstance(rho, np.ndarray) else float(out)

    def lipschitz(self) -> float:
        return float(sum(abs(c) * (k + 1) * self.span ** k
                         for k, c in enumerate(self.coeffs)))

    def range_bounds(self, rlo: float, rhi: float, samples: int = 17):
        """Certified (min_lo, min_hi, max_lo, max_hi) of the height over
        [rlo, rhi]: sampled extremes padded by the Lipschitz mesh error."""
        rlo = max(rlo, 0.0)
        rhi = min(max(rhi, rlo), self.span)
        grid = np.linspace(rlo, rhi, samples)
        vals = self.height(grid)
        pad = self.lipschitz() * (rhi - rlo) / max(samples - 1, 1) / 2.0
        mn, mx = float(np.min(vals)), float(np.max(vals))
        return mn - pad, mn, mx, mx + pad


@dataclass(frozen=True)
class Domain:
    kind: str  # "half_space" | "ball" | "exterior_ball" | "above_graph"
    dim: int
    radius: float = 1.0
    profile: Optional[RadialPolyProfile] = None

    def __post_init__(self):
        if self.kind not in ("half_space", "ball", "exterior_ball",
                             "above_graph"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.dim < 2:
            raise ValueError("dimension must be >= 2")
        if self.kind in ("ball", "exterior_ball") and not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.kind == "above_graph" and self.profile is None:
            raise ValueError("graph domain needs a profile")


def half_space(dim: int) -> Domain:
    return Domain("half_space", dim)


def ball(dim: int, radius: float = 1.0) -> Domain:
    return Domain("ball", dim, radius=radius)


def exterior_ball(dim: int, radius: float = 1.0) -> Domain:
    return Domain("exterior_ball", dim, radius=radius)


def above_graph(dim: int, profile: RadialPolyProfile) -> Domain:
    return Domain("above_graph", dim, profile=profile)


def contains(domain: Domain, x) -> bool:
    x = np.asarray(x, dtype=float)
    if domain.kind == "half_space":
        return bool(x[-1] > 0.0)
    if domain.kind == "ball":
        return bool(np.dot(x, x) < domain.radius ** 2)
    if domain.kind == "exterior_ball":
        return bool(np.dot(x, x) > domain.radius ** 2)
    rho = float(np.linalg.norm(x[:-1]))
    return bool(x[-1] > domain.profile.height(rho))


def distance_bracket(domain: Domain, x) -> tuple[float, float]:
    """Certified [lo, hi] for dist(x, boundary); exact domains return lo == hi."""
    x = np.asarray(x, dtype=float)
    if not contains(domain, x):
        raise ValueError("point lies outside the domain")
    if domain.kind == "half_space":
        d = float(x[-1])
        return d, d
    if domain.kind == "ball":
        d = domain.radius - float(np.linalg.norm(x))
        return d, d
    if domain.kind == "exterior_ball":
        d = float(np.linalg.norm(x)) - domain.radius
        return d, d
    rho = float(np.linalg.norm(x[:-1]))
    v = float(x[-1]) - float(domain.profile.height(rho))
    lip = domain.profile.lipschitz()
    return v / math.sqrt(1.0 + lip * lip), v


def distance_to_boundary(domain: Domain, x) -> float:
    lo, hi = distance_bracket(domain, x)
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Whitney decomposition

@dataclass(frozen=True)
class WhitneyCube:
    generation: int          # side = scale * 2^-generation
    corner: tuple
    side: float
    center: tuple
    diam: float
    dist: float              # midpoint of the certified bracket
    dist_lo: float
    dist_hi: float
    status: str = "ok"       # "ok" | "window_rim" | "ambiguous"


@dataclass
class WhitneyDecomposition:
    domain: Domain
    window_lo: tuple
    window_hi: tuple
    scale: float             # top cell side (power of two)
    max_generation: int
    cubes: list = field(default_factory=list)
    floor_cells: int = 0

    @property
    def kept(self) -> list:
        """Cubes eligible for capacity sums: unflagged ones only."""
        return [c for c in self.cubes if c.status == "ok"]

    @property
    def flagged(self) -> list:
        return [c for c in self.cubes if c.status != "ok"]


def _box_norm_extremes(lo: np.ndarray, hi: np.ndarray) -> tuple[float, float]:
    nearest = np.clip(0.0, lo, hi)
    farthest = np.where(np.abs(lo) > np.abs(hi), lo, hi)
    return float(np.linalg.norm(nearest)), float(np.linalg.norm(farthest))


def _cube_state(domain: Domain, lo: np.ndarray, side: float):
    """(intersects_domain, dist_lo, dist_hi) for the closed cube at lo."""
    hi = lo + side
    if domain.kind == "half_space":
        if hi[-1] <= 0.0:
            return False, 0.0, 0.0
        d = max(float(lo[-1]), 0.0)
        return True, d, d
    if domain.kind == "ball":
        near, far = _box_norm_extremes(lo, hi)
        if near >= domain.radius:
            return False, 0.0, 0.0
        d = max(domain.radius - far, 0.0)
        return True, d, d
    if domain.kind == "exterior_ball":
        near, far = _box_norm_extremes(lo, hi)
        if far <= domain.radius:
            return False, 0.0, 0.0
        d = max(near - domain.radius, 0.0)
        return True, d, d
    # above_graph: bracket the vertical gap over the base box
    base_lo, base_hi = lo[:-1], hi[:-1]
    rlo, rhi = _box_norm_extremes(base_lo, base_hi)
    mn_lo, mn_hi, mx_lo, mx_hi = domain.profile.range_bounds(rlo, rhi)
    top = float(hi[-1])
    if top <= mn_lo:
        return False, 0.0, 0.0
    gap_lo = max(float(lo[-1]) - mx_hi, 0.0)
    gap_hi = max(float(lo[-1]) - mx_lo, 0.0)
    lip = domain.profile.lipschitz()
    return True, gap_lo / math.sqrt(1.0 + lip * lip), gap_hi


def whitney_decompose(domain: Domain, window_lo, window_hi,
                      max_generation: int = 20) -> WhitneyDecomposition:
    """Emit maximal dyadic cubes Q with diam(Q) <= dist(Q, boundary) whose
    lattice parents violate that bound, restricted to cells meeting the
    window box."""
    if not 0 < max_generation <= MAX_GENERATION_LIMIT:
        raise ValueError(f"max_generation must be in 1..{MAX_GENERATION_LIMIT}")
    wlo = np.asarray(window_lo, dtype=float)
    whi = np.asarray(window_hi, dtype=float)
    if wlo.shape != (domain.dim,) or np.any(whi <= wlo):
        raise ValueError("window must be a nonempty box of matching dimension")
    scale = 2.0 ** math.ceil(math.log2(float(np.max(whi - wlo))))
    dim = domain.dim
    sqrt_d = math.sqrt(dim)

    dec = WhitneyDecomposition(domain=domain, window_lo=tuple(wlo),
                               window_hi=tuple(whi), scale=scale,
                               max_generation=max_generation)

    def visit(gen: int, idx: tuple):
        side = scale / 2 ** gen
        lo_idx = np.asarray(idx, dtype=float)
        lo = lo_idx * side
        inter, dlo, dhi = _cube_state(domain, lo, side)
        diam = side * sqrt_d
        if not inter:
            return
        certain = diam <= dlo
        if certain:
            pside = side * 2.0
            plo = np.floor(lo_idx / 2.0) * pside
            _, pdlo, pdhi = _cube_state(domain, plo, pside)
            pdiam = pside * sqrt_d
            parent_fails = pdiam > pdhi
            parent_holds = pdiam <= pdlo
            hi = lo + side
            rim = bool(np.any(lo <= wlo) or np.any(hi >= whi))
            cube = WhitneyCube(
                generation=gen, corner=tuple(lo), side=side,
                center=tuple(lo + 0.5 * side), diam=diam,
                dist=0.5 * (dlo + dhi), dist_lo=dlo, dist_hi=dhi,
                status="ok")
            if not parent_fails:
                # blocked by the window top or uncertain parent: an artifact
                status = "window_rim" if parent_holds else "ambiguous"
                cube = replace(cube, status=status)
            elif rim:
                cube = replace(cube, status="window_rim")
            dec.cubes.append(cube)
            return
        if gen >= max_generation:
            dec.floor_cells += 1
            return
        for child in range(2 ** dim):
            off = [(child >> b) & 1 for b in range(dim)]
            visit(gen + 1, tuple(int(2 * i + o) for i, o in zip(idx, off)))

    start = np.floor(wlo / scale).astype(int)
    stop = np.ceil(whi / scale).astype(int)
    ranges = [range(a, max(b, a + 1)) for a, b in zip(start, stop)]

    def product(rs, prefix=()):
        if not rs:
            visit(0, prefix)
            return
        for v in rs[0]:
            product(rs[1:], prefix + (v,))

    product(ranges)
    return dec


def double_cover_multiplicity(cubes, points) -> np.ndarray:
    """For each point, the number of doubled cubes (side scaled by 2 about
    the center) containing it."""
    pts = np.asarray(points, dtype=float)
    counts = np.zeros(len(pts), dtype=int)
    for c in cubes:
        center = np.asarray(c.center)
        inside = np.all(np.abs(pts - center) <= c.side, axis=1)
        counts += inside
    return counts


# ---------------------------------------------------------------------------
# Boundary-anchored region families

@lru_cache(maxsize=None)
def _log_region_start(level: int) -> int:
    """First annulus index where every iterated logarithm in a level-`level`
    height stays above 1/2, so the family is defined and Lipschitz-tame.
    Thinness is a tail property, so truncating the region to these scales
    does not move any threshold."""
    n = 1
    while True:
        u = n * math.log(2.0)
        ok = True
        for depth in range(1, level + 1):
            u = math.log(u) if u > 0 else -math.inf
            if not u >= 0.5:
                ok = False
                break
        if ok:
            return n
        n += 1


@dataclass(frozen=True)
class RegionSet:
    """A set to be tested for thinness at a boundary anchor (the origin of
    the half space unless stated otherwise).

    Kinds: "power_law" (height rho^gamma), "log_corrected" (height with
    iterated-logarithm corrections at the stated level), "subgraph"
    (explicit radial profile), "cube_union" (finite union of Whitney cubes).
    """

    kind: str
    anchor: tuple = (0.0, 0.0, 0.0)
    gamma: float = 1.0
    beta: float = 0.0
    level: int = 1
    profile: Optional[RadialPolyProfile] = None
    cubes: tuple = ()

    def __post_init__(self):
        if self.kind not in ("power_law", "log_corrected", "subgraph",
                             "cube_union"):
            raise ValueError(f"unknown region kind {self.kind!r}")
        if self.kind == "power_law" and self.gamma < 1.0:
            raise ValueError("power-law exponent must be >= 1")
        if self.kind == "log_corrected" and self.level < 1:
            raise ValueError("level must be >= 1")
        if self.kind == "subgraph" and self.profile is None:
            raise ValueError("subgraph region needs a profile")
        if self.kind == "cube_union" and not self.cubes:
            raise ValueError("cube union needs at least one cube")

    @property
    def start_index(self) -> int:
        """Annuli with n < start_index are empty for this region."""
        if self.kind == "log_corrected":
            return _log_region_start(self.level)
        return 1


def power_law_region(gamma: float, dim: int = 3) -> RegionSet:
    return RegionSet("power_law", anchor=(0.0,) * dim, gamma=gamma)


def log_corrected_region(beta: float, level: int = 1,
                         dim: int = 3) -> RegionSet:
    return RegionSet("log_corrected", anchor=(0.0,) * dim, beta=beta,
                     level=level)


def subgraph_region(profile: RadialPolyProfile, dim: int = 3) -> RegionSet:
    return RegionSet("subgraph", anchor=(0.0,) * dim, profile=profile)


def cube_union_region(cubes, dim: int = 3) -> RegionSet:
    return RegionSet("cube_union", anchor=(0.0,) * dim, cubes=tuple(cubes))


def iterated_log(u, depth: int):
    """depth-fold natural logarithm of u (depth 0 returns u)."""
    out = np.asarray(u, dtype=float)
    for _ in range(depth):
        out = np.log(out)
    return out


def log_profile_height(region: RegionSet, u):
    """log f(rho) against u = log(1/rho) for graph-type regions.

    Valid where the region is defined (u above the start scale); the
    caller is expected to stay within annuli n >= region.start_index.
    """
    u = np.asarray(u, dtype=float)
    if region.kind == "power_law":
        return -region.gamma * u
    if region.kind == "log_corrected":
        if region.level == 1:
            return -u - region.beta * np.log(u)
        acc = np.zeros_like(u)
        for j in range(1, region.level):
            acc = acc + np.log(iterated_log(u, j))
        return -u - acc / 3.0 - region.beta * np.log(
            iterated_log(u, region.level))
    if region.kind == "subgraph":
        rho = np.exp(-u)
        with np.errstate(divide="ignore"):
            return np.log(region.profile.height(rho))
    raise ValueError("cube unions have no graph profile")


def profile_height(region: RegionSet, rho):
    """Height of graph-type regions at radius rho; zero where undefined."""
    rho_arr = np.asarray(rho, dtype=float)
    cutoff = 2.0 ** (-float(region.start_index) - 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = -np.log(rho_arr)
        vals = np.where(
            (rho_arr > 0) & (rho_arr < 2.0 * cutoff),
            np.exp(log_profile_height(
                region, np.maximum(u, math.log(1.0 / (2.0 * cutoff)) + 1e-12))),
            0.0)
    return vals if isinstance(rho, np.ndarray) else float(vals)


def region_contains(region: RegionSet, x) -> bool:
    x = np.asarray(x, dtype=float)
    z = np.asarray(region.anchor, dtype=float)
    w = x - z
    if region.kind == "cube_union":
        for c in region.cubes:
            lo = np.asarray(c.corner)
            if np.all(x >= lo) and np.all(x <= lo + c.side):
                return True
        return False
    rho = float(np.linalg.norm(w[:-1]))
    h = float(w[-1])
    return 0.0 < h <= float(profile_height(region, rho))


@dataclass(frozen=True)
class AnnulusPiece:
    index: int
    r_inner: float
    r_outer: float
    empty: bool


def annulus_split(region: RegionSet, n_max: int = 36) -> list[AnnulusPiece]:
    """Dyadic shells 2^-(n+1) <= |x - anchor| < 2^-n, n = 1..n_max."""
    if n_max < 1:
        raise ValueError("need at least one annulus")
    pieces = []
    for n in range(1, n_max + 1):
        empty = region.kind != "cube_union" and n < region.start_index
        if region.kind == "cube_union":
            z = np.asarray(region.anchor)
            r_in, r_out = 2.0 ** -(n + 1), 2.0 ** -n
            hit = False
            for c in region.cubes:
                lo = np.asarray(c.corner) - z
                near, far = _box_norm_extremes(lo, lo + c.side)
                if near < r_out and far >= r_in:
                    hit = True
                    break
            empty = not hit
        pieces.append(AnnulusPiece(index=n, r_inner=2.0 ** -(n + 1),
                                   r_outer=2.0 ** -n, empty=empty))
    return pieces
