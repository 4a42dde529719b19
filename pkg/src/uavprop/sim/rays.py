"""Single-interaction ray tracer over axis-aligned box buildings.

Paths considered: line of sight, one specular bounce off a vertical wall
(image method) and one knife-edge diffraction over a rooftop edge per
obstructing building.  Ground reflection is not modelled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..analysis import SPEED_OF_LIGHT, friis_path_gain, wavelength_m
from .scene import Building, Scene

_EPS = 1e-9


@dataclass(frozen=True)
class Ray:
    kind: str  # "los" | "reflection" | "diffraction"
    vertices: tuple  # (tx, [interaction point], rx) as (x, y, z) tuples
    path_length_m: float
    gain_db: float

    @property
    def delay_ns(self) -> float:
        return self.path_length_m / SPEED_OF_LIGHT * 1e9

    @property
    def departure(self) -> tuple[float, float, float]:
        return _sub(self.vertices[1], self.vertices[0])

    @property
    def arrival(self) -> tuple[float, float, float]:
        """Direction from the receiver back along the incoming ray."""
        return _sub(self.vertices[-2], self.vertices[-1])


def _sub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def _dist(a, b) -> float:
    return math.dist(a, b)


def knife_edge_loss(v: float) -> float:
    """Single knife-edge diffraction loss in dB (positive = loss)."""
    if v <= -0.78:
        return 0.0
    return 6.9 + 20.0 * math.log10(math.sqrt((v - 0.1) ** 2 + 1.0) + v - 0.1)


def fresnel_v(h: float, d1: float, d2: float, wavelength: float) -> float:
    return h * math.sqrt(2.0 * (d1 + d2) / (wavelength * d1 * d2))


def segment_hits_box(p, q, b: Building) -> bool:
    """True if the open segment p-q passes through the interior of ``b``.

    Grazing a face or edge does not count, so interaction points on a
    wall or roof edge do not block their own legs.
    """
    lo = (b.x_min + _EPS, b.y_min + _EPS, _EPS)
    hi = (b.x_max - _EPS, b.y_max - _EPS, b.height_m - _EPS)
    t0, t1 = 0.0, 1.0
    for k in range(3):
        d = q[k] - p[k]
        if abs(d) < 1e-15:
            if not lo[k] < p[k] < hi[k]:
                return False
            continue
        a, c = (lo[k] - p[k]) / d, (hi[k] - p[k]) / d
        if a > c:
            a, c = c, a
        t0, t1 = max(t0, a), min(t1, c)
        if t0 >= t1:
            return False
    return True


def _clear(p, q, buildings) -> bool:
    return not any(segment_hits_box(p, q, b) for b in buildings)


def _footprint_crossings(p, q, b: Building) -> list[float]:
    """Parameters in (0, 1) where the horizontal projection of p-q crosses the footprint outline."""
    out = []
    for k, lo, hi in ((0, b.x_min, b.x_max), (1, b.y_min, b.y_max)):
        d = q[k] - p[k]
        if abs(d) < 1e-15:
            continue
        other = 1 - k
        olo, ohi = (b.y_min, b.y_max) if k == 0 else (b.x_min, b.x_max)
        for edge in (lo, hi):
            s = (edge - p[k]) / d
            if 0.0 < s < 1.0:
                o = p[other] + s * (q[other] - p[other])
                if olo - _EPS <= o <= ohi + _EPS:
                    out.append(s)
    return sorted(set(out))


def _reflections(tx, rx, b: Building, freq_ghz: float, buildings) -> list[Ray]:
    rays = []
    faces = ((0, b.x_min, -1), (0, b.x_max, 1), (1, b.y_min, -1), (1, b.y_max, 1))
    for k, plane, outward in faces:
        if (tx[k] - plane) * outward <= 0 or (rx[k] - plane) * outward <= 0:
            continue
        image = list(tx)
        image[k] = 2.0 * plane - tx[k]
        d = rx[k] - image[k]
        s = (plane - image[k]) / d
        pt = [image[i] + s * (rx[i] - image[i]) for i in range(3)]
        pt[k] = plane
        other = 1 - k
        olo, ohi = (b.y_min, b.y_max) if k == 0 else (b.x_min, b.x_max)
        if not (olo <= pt[other] <= ohi and 0.0 <= pt[2] <= b.height_m):
            continue
        pt = tuple(pt)
        if not (_clear(tx, pt, buildings) and _clear(pt, rx, buildings)):
            continue
        length = _dist(tx, pt) + _dist(pt, rx)
        rays.append(Ray("reflection", (tuple(tx), pt, tuple(rx)), length,
                        friis_path_gain(freq_ghz, length) + b.reflection_coeff_db))
    return rays


def _diffraction(tx, rx, b: Building, freq_ghz: float, buildings) -> Ray | None:
    lam = wavelength_m(freq_ghz)
    candidates = []
    for s in _footprint_crossings(tx, rx, b):
        q = tuple(tx[i] + s * (rx[i] - tx[i]) for i in range(3))
        edge = (q[0], q[1], b.height_m)
        h = b.height_m - q[2]
        if h <= 0:  # the path clears this edge; it is not what blocks the LOS
            continue
        d1, d2 = _dist(tx, q), _dist(q, rx)
        v = fresnel_v(h, d1, d2, lam)
        candidates.append((v, edge))
    ordered = sorted(candidates, reverse=True)
    if len(candidates) >= 2:
        apex = _equivalent_edge(tx, rx, b, lam)
        if apex is not None:
            ordered.append(apex)  # fallback only
    for v, edge in ordered:
        if _clear(tx, edge, buildings) and _clear(edge, rx, buildings):
            length = _dist(tx, edge) + _dist(edge, rx)
            gain = friis_path_gain(freq_ghz, length) - knife_edge_loss(v)
            return Ray("diffraction", (tuple(tx), edge, tuple(rx)), length, gain)
    return None


def _equivalent_edge(tx, rx, b: Building, lam: float):
    """Bullington edge for a roof too deep for either edge alone.

    The apex is where the line from tx over the near roof edge meets the
    line from rx over the far one.  Returns (v, apex) or None.
    """
    crossings = _footprint_crossings(tx, rx, b)
    s1, s2 = crossings[0], crossings[-1]
    span = math.hypot(rx[0] - tx[0], rx[1] - tx[1])
    if span == 0 or s2 <= s1:
        return None
    top = b.height_m
    m1 = (top - tx[2]) / (s1 * span)
    m2 = (top - rx[2]) / ((1.0 - s2) * span)
    if m1 + m2 <= 0:
        return None
    d = (rx[2] + m2 * span - tx[2]) / (m1 + m2)
    s = d / span
    if not 0.0 < s < 1.0:
        return None
    apex = (tx[0] + s * (rx[0] - tx[0]), tx[1] + s * (rx[1] - tx[1]), tx[2] + m1 * d)
    los_z = tx[2] + s * (rx[2] - tx[2])
    h = apex[2] - los_z
    if h <= 0:
        return None
    q = (apex[0], apex[1], los_z)
    return fresnel_v(h, _dist(tx, q), _dist(q, rx), lam), apex


def trace_rays(scene: Scene, tx, rx, freq_ghz: float) -> list[Ray]:
    """All single-interaction rays between ``tx`` and ``rx`` (ENU triples)."""
    tx, rx = tuple(map(float, tx)), tuple(map(float, rx))
    buildings = scene.buildings
    if any(b.contains(tx) or b.contains(rx) for b in buildings):
        return []
    rays = []
    blockers = [b for b in buildings if segment_hits_box(tx, rx, b)]
    if not blockers:
        length = _dist(tx, rx)
        if length > 0:
            rays.append(Ray("los", (tx, rx), length, friis_path_gain(freq_ghz, length)))
    for b in buildings:
        rays.extend(_reflections(tx, rx, b, freq_ghz, buildings))
    for b in blockers:
        ray = _diffraction(tx, rx, b, freq_ghz, buildings)
        if ray is not None:
            rays.append(ray)
    return rays


def total_gain_db(rays) -> float | None:
    if not rays:
        return None
    return 10.0 * math.log10(sum(10.0 ** (r.gain_db / 10.0) for r in rays))
