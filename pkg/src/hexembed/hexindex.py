"""Icosahedral hexagonal hierarchical spatial index.

Implements the standard construction used by hexagonal geospatial indexes:
the sphere is projected gnomonically onto the 20 faces of an icosahedron and
each face carries an aperture-7 triangular lattice of cell centers. Lattice
spacing at resolution 0 is (3 - sqrt(5))/2 in gnomonic units, shrinking by
sqrt(7) per resolution with the orientation alternating between the aligned
("class II", even resolutions) and 19.1-degree-rotated ("class III", odd
resolutions) states. This yields 122 cells at resolution 0 (12 of them
pentagons centered on the icosahedron vertices) and 2 + 120 * 7^r cells at
resolution r; resolution-9 cells average 0.105 km^2 with boundary edges
between roughly 150 and 220 m depending on the position within a face.

A cell is addressed by (owner face, resolution, lattice i, lattice j) packed
into a 64-bit integer; the owner face of a cell is the face whose center is
nearest to the cell center (smallest face id on ties). The canonical string
form of an address is its 16-digit lowercase hexadecimal representation.

Point-to-cell assignment: a point belongs to the face whose center is nearest
(this face's region is exactly its spherical triangle), and within that face
to the nearest lattice center in the face's gnomonic plane, i.e. cells are
the planar Voronoi hexagons of the lattice. Adjacent faces' lattices agree
along the shared edge (the edge midpoint is a lattice point at every
resolution and the triangular lattice is centrally symmetric about it), so
the assignment is globally consistent; cells straddling a face seam have
exactly hexagonal boundaries only to first order, which at city scales means
sub-centimeter seam slivers.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

# Published icosahedron orientation (face centers, radians). The orientation
# places all 12 pentagons in the ocean.
_FACE_CENTERS_LATLNG = [
    (0.803582649718989942, 1.248397419617396099),
    (1.307747883455638156, 2.536945009877921159),
    (1.054751253523952054, -1.347517358900396623),
    (0.600191595538186799, -0.450603909469755746),
    (0.491715428198773866, 0.401988202911306943),
    (0.172745327415618701, 1.678146885280433686),
    (0.605929321571350690, 2.953923329812411617),
    (0.427370518328979641, -1.888876200336285401),
    (-0.079066118549212831, -0.733429513380867741),
    (-0.230961644455383637, 0.506495587332349035),
    (0.079066118549212831, 2.408163140208925497),
    (0.230961644455383637, -2.635097066257444203),
    (-0.172745327415618701, -1.463445768309359553),
    (-0.605929321571350690, -0.187669323777381622),
    (-0.427370518328979641, 1.252716453253569838),
    (-0.600191595538186799, 2.690988744120037492),
    (-0.491715428198773866, -2.739604450678486295),
    (-0.803582649718989942, -1.893195233972397139),
    (-1.307747883455638156, -0.604647643711872080),
    (-1.054751253523952054, 1.794075294689396615),
]

NUM_FACES = 20
MAX_RESOLUTION = 15

# Resolution-0 lattice spacing in gnomonic units: (3 - sqrt(5)) / 2. The
# face-center-to-vertex gnomonic distance is exactly twice this, so the
# icosahedron vertices are lattice points (the pentagon cells) at every
# resolution.
RES0_SPACING = (3.0 - math.sqrt(5.0)) / 2.0

# Aperture-7 rotation: arg(2 + e^{i pi/3}) = atan2(sqrt(3), 5).
_AP7_ROT = math.atan2(math.sqrt(3.0), 5.0)

# Axial lattice basis vector: zeta = e^{2 pi i / 3}.
_ZETA = complex(-0.5, math.sqrt(3.0) / 2.0)

_SQRT3 = math.sqrt(3.0)

# Face/owner tie tolerance. Cell centers lying exactly on a face seam compare
# equal to ~1e-15 in their dot products against the two face centers, while
# centers one lattice row away differ by >= ~1e-8 even at resolution 15.
_FACE_TIE_EPS = 1e-12

def _latlng_to_xyz(lat: float, lng: float) -> tuple[float, float, float]:
    cl = math.cos(lat)
    return (cl * math.cos(lng), cl * math.sin(lng), math.sin(lat))


def _xyz_to_latlng(v: tuple[float, float, float]) -> tuple[float, float]:
    x, y, z = v
    return (math.atan2(z, math.hypot(x, y)), math.atan2(y, x))


def _build_geometry():
    """Construct the exact icosahedron in the published orientation.

    The remembered face-center table is only trusted for orientation: an
    exact icosahedron is built from golden-ratio coordinates and rigidly
    aligned to the table (Kabsch), which removes any rounding noise while
    preserving the published face numbering.
    """
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    raw = []
    for a in (-1.0, 1.0):
        for b in (-phi, phi):
            raw.append((0.0, a, b))
            raw.append((a, b, 0.0))
            raw.append((b, 0.0, a))
    verts = np.array(raw) / math.sqrt(1.0 + phi * phi)

    # Faces = triples of mutually adjacent vertices (dot = 1/sqrt(5)).
    adj = verts @ verts.T > 0.3
    faces = []
    for i in range(12):
        for j in range(i + 1, 12):
            if not adj[i, j]:
                continue
            for k in range(j + 1, 12):
                if adj[i, k] and adj[j, k]:
                    faces.append((i, j, k))
    assert len(faces) == 20
    centers = np.array([verts[list(f)].mean(axis=0) for f in faces])
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)

    target = np.array([_latlng_to_xyz(lat, lng) for lat, lng in _FACE_CENTERS_LATLNG])

    # Rigidly align the exact centers onto the published orientation. The
    # correspondence is unknown up front, so anchor faces 0 and 1 of the
    # table against every compatible pair of exact centers and keep the
    # rotation under which all 20 faces coincide.
    def frame(p, q):
        u1 = p / np.linalg.norm(p)
        u2 = q - np.dot(q, u1) * u1
        u2 /= np.linalg.norm(u2)
        return np.column_stack([u1, u2, np.cross(u1, u2)])

    dot01 = float(np.dot(target[0], target[1]))
    rot = None
    order = None
    for a in range(20):
        for b in range(20):
            if a == b or abs(float(np.dot(centers[a], centers[b])) - dot01) > 1e-6:
                continue
            cand = frame(target[0], target[1]) @ frame(centers[a], centers[b]).T
            moved = centers @ cand.T
            cand_order = np.argmax(moved @ target.T, axis=1)
            if sorted(cand_order) != list(range(20)):
                continue
            if np.max(np.linalg.norm(moved - target[cand_order], axis=1)) < 1e-6:
                rot, order = cand, cand_order
                break
        if rot is not None:
            break
    assert rot is not None, "face-center table is not an icosahedron orientation"

    # Polish with a full Kabsch fit over all 20 correspondences.
    h = centers.T @ target[order]
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    verts = verts @ rot.T
    centers = centers @ rot.T
    residual = np.max(np.linalg.norm(centers - target[order], axis=1))
    assert residual < 1e-6, f"face table is not an icosahedron (residual {residual})"

    # Reindex faces to the published numbering and vertices canonically.
    inv = np.empty(20, dtype=int)
    inv[order] = np.arange(20)
    centers = centers[inv]
    faces = [faces[i] for i in inv]
    vorder = sorted(range(12), key=lambda i: tuple(np.round(verts[i], 9)))
    vmap = {old: new for new, old in enumerate(vorder)}
    verts = verts[vorder]
    faces = [tuple(sorted(vmap[v] for v in f)) for f in faces]

    face_centers = [tuple(c) for c in centers]
    face_verts = faces
    frames = []
    for f in range(20):
        c = centers[f]
        v0 = verts[face_verts[f][0]]
        xs = v0 - np.dot(v0, c) * c
        xs /= np.linalg.norm(xs)
        ys = np.cross(c, xs)
        # Vertex must sit at gnomonic distance 2 * RES0_SPACING along +x.
        t = math.tan(math.acos(float(np.dot(v0, c))))
        assert abs(t - 2.0 * RES0_SPACING) < 1e-9
        frames.append((tuple(c), tuple(xs), tuple(ys)))
    return [tuple(v) for v in verts], face_centers, face_verts, frames


_VERTICES, _FACE_CENTERS, _FACE_VERTS, _FRAMES = _build_geometry()


def _lattice_scale(res: int) -> complex:
    """Complex lattice basis scale at a resolution (spacing and twist)."""
    mag = RES0_SPACING * 7.0 ** (-res / 2.0)
    if res % 2:
        return mag * cmath.exp(1j * _AP7_ROT)
    return complex(mag, 0.0)


def _nearest_face(p: tuple[float, float, float]) -> int:
    best, best_dot = 0, -2.0
    for f in range(NUM_FACES):
        c = _FACE_CENTERS[f]
        d = p[0] * c[0] + p[1] * c[1] + p[2] * c[2]
        if d > best_dot + _FACE_TIE_EPS:
            best, best_dot = f, d
    return best


def _project(p: tuple[float, float, float], face: int) -> complex:
    c, xs, ys = _FRAMES[face]
    d = p[0] * c[0] + p[1] * c[1] + p[2] * c[2]
    x = (p[0] * xs[0] + p[1] * xs[1] + p[2] * xs[2]) / d
    y = (p[0] * ys[0] + p[1] * ys[1] + p[2] * ys[2]) / d
    return complex(x, y)


def _unproject(z: complex, face: int) -> tuple[float, float, float]:
    c, xs, ys = _FRAMES[face]
    v = (
        c[0] + z.real * xs[0] + z.imag * ys[0],
        c[1] + z.real * xs[1] + z.imag * ys[1],
        c[2] + z.real * xs[2] + z.imag * ys[2],
    )
    n = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    return (v[0] / n, v[1] / n, v[2] / n)


def _hex_round(z: complex) -> tuple[int, int]:
    """Nearest lattice point of {i + j*zeta} to a complex position.

    Cube rounding is performed in the 60-degree basis (1, e^{i pi/3}), where
    it is exact for the triangular lattice, then mapped back to the zeta
    basis via i = a + b, j = b.
    """
    b = z.imag * 2.0 / _SQRT3
    a = z.real - b * 0.5
    x, y, zz = a, -a - b, b
    rx, ry, rz = round(x), round(y), round(zz)
    dx, dy, dz = abs(rx - x), abs(ry - y), abs(rz - zz)
    if dx > dy and dx > dz:
        rx = -ry - rz
    elif dy <= dz:
        rz = -rx - ry
    return int(rx + rz), int(rz)


def _lattice_pos(i: int, j: int, res: int) -> complex:
    return _lattice_scale(res) * (i + j * _ZETA)


_COORD_BITS = 26
_COORD_MASK = (1 << _COORD_BITS) - 1


def _zigzag(v: int) -> int:
    return (v << 1) if v >= 0 else ((-v << 1) - 1)


def _unzigzag(u: int) -> int:
    return (u >> 1) if not (u & 1) else -((u + 1) >> 1)


def _pack(face: int, res: int, i: int, j: int) -> int:
    return (
        (res << 57)
        | (face << 52)
        | (_zigzag(i) << _COORD_BITS)
        | _zigzag(j)
    )


def _unpack(address: int) -> tuple[int, int, int, int]:
    res = (address >> 57) & 0xF
    face = (address >> 52) & 0x1F
    i = _unzigzag((address >> _COORD_BITS) & _COORD_MASK)
    j = _unzigzag(address & _COORD_MASK)
    return face, res, i, j


@dataclass(frozen=True, order=True)
class CellId:
    """Address of one cell at a fixed resolution.

    Ordering and equality follow the packed 64-bit address, which matches
    lexicographic order of the canonical hexadecimal string form.
    """

    address: int

    @property
    def resolution(self) -> int:
        return (self.address >> 57) & 0xF

    def __str__(self) -> str:
        return f"{self.address:016x}"

    @classmethod
    def from_string(cls, text: str) -> "CellId":
        if len(text) != 16:
            raise ValueError(f"cell address must be 16 hex digits, got {text!r}")
        cell = cls(int(text, 16))
        face, res, _, _ = _unpack(cell.address)
        if face >= NUM_FACES or res > MAX_RESOLUTION:
            raise ValueError(f"not a valid cell address: {text!r}")
        return cell


def _canonical_cell(center_face: int, z_center: complex, res: int) -> CellId:
    """Canonicalize a cell given its center position in some face frame.

    Re-rounds in the owner face's frame until the owner of the exact lattice
    center is stable (converges in one step away from seams, two at most).
    """
    scale = _lattice_scale(res)
    face = center_face
    z = z_center
    for _ in range(4):
        sphere = _unproject(z, face)
        owner = _nearest_face(sphere)
        i, j = _hex_round(_project(sphere, owner) / scale)
        if owner == face:
            return CellId(_pack(owner, res, i, j))
        face = owner
        z = scale * (i + j * _ZETA)
    return CellId(_pack(face, res, i, j))


def cell_of_point(lon: float, lat: float, resolution: int) -> CellId:
    """Cell containing a WGS84 point at the given resolution."""
    if not (-180.0 <= lon <= 180.0) or not (-90.0 <= lat <= 90.0):
        raise ValueError(f"coordinates out of range: ({lon}, {lat})")
    if not (0 <= resolution <= MAX_RESOLUTION):
        raise ValueError(f"resolution must be in [0, {MAX_RESOLUTION}]")
    p = _latlng_to_xyz(math.radians(lat), math.radians(lon))
    face = _nearest_face(p)
    scale = _lattice_scale(resolution)
    i, j = _hex_round(_project(p, face) / scale)
    return _canonical_cell(face, scale * (i + j * _ZETA), resolution)


def cell_center(cell: CellId) -> tuple[float, float]:
    """Cell center as (lon, lat) degrees."""
    face, res, i, j = _unpack(cell.address)
    lat, lng = _xyz_to_latlng(_unproject(_lattice_pos(i, j, res), face))
    return (math.degrees(lng), math.degrees(lat))


def _center_xyz(cell: CellId) -> tuple[float, float, float]:
    face, res, i, j = _unpack(cell.address)
    return _unproject(_lattice_pos(i, j, res), face)


def is_pentagon(cell: CellId) -> bool:
    c = _center_xyz(cell)
    return any(
        c[0] * v[0] + c[1] * v[1] + c[2] * v[2] > 1.0 - 1e-12 for v in _VERTICES
    )


def _pentagon_vertex(cell: CellId) -> int:
    c = _center_xyz(cell)
    dots = [c[0] * v[0] + c[1] * v[1] + c[2] * v[2] for v in _VERTICES]
    return max(range(12), key=dots.__getitem__)


def cell_boundary(cell: CellId) -> list[tuple[float, float]]:
    """Boundary ring as (lon, lat) degrees, counterclockwise, not closed.

    Hexagons yield 6 vertices, pentagon cells 5.
    """
    face, res, i, j = _unpack(cell.address)
    scale = _lattice_scale(res)
    if is_pentagon(cell):
        return _pentagon_boundary(_pentagon_vertex(cell), res)
    center = _lattice_pos(i, j, res)
    ring = []
    for k in range(6):
        off = scale * cmath.exp(1j * (math.pi / 6.0 + k * math.pi / 3.0)) / _SQRT3
        lat, lng = _xyz_to_latlng(_unproject(center + off, face))
        ring.append((math.degrees(lng), math.degrees(lat)))
    return ring


def _pentagon_boundary(vertex: int, res: int) -> list[tuple[float, float]]:
    # Collect the lattice corners of the vertex cell from every surrounding
    # face whose wedge contains (or borders) the corner direction. At even
    # resolutions the corners lie exactly on the face seams and show up from
    # both adjacent frames, so near-duplicates are merged; at odd resolutions
    # each face contributes one interior corner. Five corners remain.
    v = _VERTICES[vertex]
    scale = _lattice_scale(res)
    candidates: list[tuple[float, float, float]] = []
    for f in range(NUM_FACES):
        if vertex not in _FACE_VERTS[f]:
            continue
        w = _project(v, f)
        others = [u for u in _FACE_VERTS[f] if u != vertex]
        d1 = _project(_VERTICES[others[0]], f) - w
        d2 = _project(_VERTICES[others[1]], f) - w
        d1 /= abs(d1)
        d2 /= abs(d2)
        if d1.real * d2.imag - d1.imag * d2.real < 0:
            d1, d2 = d2, d1
        for k in range(6):
            direction = cmath.exp(1j * (math.pi / 6.0 + k * math.pi / 3.0))
            direction *= scale / abs(scale)
            c1 = d1.real * direction.imag - d1.imag * direction.real
            c2 = direction.real * d2.imag - direction.imag * d2.real
            if c1 > -1e-9 and c2 > -1e-9:
                corner = w + direction * abs(scale) / _SQRT3
                candidates.append(_unproject(corner, f))
    merged: list[tuple[float, float, float]] = []
    tol = 0.2 * abs(scale)
    for p in candidates:
        if all(
            math.dist(p, q) > tol for q in merged
        ):
            merged.append(p)
    assert len(merged) == 5, f"pentagon boundary has {len(merged)} corners"

    # Order corners counterclockwise around the vertex.
    east = np.cross((0.0, 0.0, 1.0), v)
    east = east / np.linalg.norm(east)
    north = np.cross(v, east)

    def azimuth(p):
        d = np.subtract(p, v)
        return math.atan2(float(np.dot(d, east)), float(np.dot(d, north)))

    merged.sort(key=azimuth)
    out = []
    for p in merged:
        lat, lng = _xyz_to_latlng(tuple(p))
        out.append((math.degrees(lng), math.degrees(lat)))
    return out


def cell_neighbors(cell: CellId) -> list[CellId]:
    """Cells sharing an edge with this cell (6, or 5 for pentagons).

    Probes a point just beyond the midpoint of every boundary edge; this is
    exact across face seams and at pentagons, where naive lattice stepping
    would walk into the deleted wedge.
    """
    res = cell.resolution
    center = _center_xyz(cell)
    ring = [
        _latlng_to_xyz(math.radians(lat), math.radians(lon))
        for lon, lat in cell_boundary(cell)
    ]
    out: list[CellId] = []
    for k in range(len(ring)):
        a, b = ring[k], ring[(k + 1) % len(ring)]
        mid = tuple((a[d] + b[d]) / 2.0 for d in range(3))
        probe = tuple(center[d] + 1.15 * (mid[d] - center[d]) for d in range(3))
        n = math.sqrt(sum(x * x for x in probe))
        probe = (probe[0] / n, probe[1] / n, probe[2] / n)
        face = _nearest_face(probe)
        scale = _lattice_scale(res)
        i, j = _hex_round(_project(probe, face) / scale)
        neighbor = _canonical_cell(face, scale * (i + j * _ZETA), res)
        if neighbor != cell and neighbor not in out:
            out.append(neighbor)
    return out


def are_neighbors(a: CellId, b: CellId) -> bool:
    if a.resolution != b.resolution:
        raise ValueError("cells must share a resolution")
    return b in cell_neighbors(a)


def cell_to_parent(cell: CellId, parent_resolution: int) -> CellId:
    """Ancestor cell containing this cell's center at a coarser resolution."""
    if parent_resolution > cell.resolution:
        raise ValueError("parent resolution must be coarser")
    if parent_resolution == cell.resolution:
        return cell
    p = _center_xyz(cell)
    face = _nearest_face(p)
    scale = _lattice_scale(parent_resolution)
    i, j = _hex_round(_project(p, face) / scale)
    return _canonical_cell(face, scale * (i + j * _ZETA), parent_resolution)


def cells_at_resolution(res: int) -> list[CellId]:
    """Enumerate every cell at a coarse resolution (res <= 2).

    Lattice positions within every face patch are generated redundantly from
    all 20 frames and deduplicated through canonicalization.
    """
    if res > 2:
        raise ValueError("full enumeration is only supported for res <= 2")
    reach = int(math.ceil(2.0 * 7.0 ** (res / 2.0))) + 2
    seen: set[CellId] = set()
    scale = _lattice_scale(res)
    for face in range(NUM_FACES):
        for i in range(-reach, reach + 1):
            for j in range(-reach, reach + 1):
                z = _lattice_pos(i, j, res)
                if abs(z) > 2.0 * RES0_SPACING + abs(scale):
                    continue
                seen.add(_canonical_cell(face, z, res))
    return sorted(seen)
