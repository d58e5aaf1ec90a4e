"""2D coordinate generation and fixed-size rasterization.

Layout places rings as regular polygons with unit sides (fused rings
reflected across the shared edge, spiro rings tangent at the shared
atom), then grows acyclic substituents outward, each new atom taking the
direction bisecting the largest free angular gap around its parent.  If
the result violates the distance constraints, up to 200 deterministic
force-directed iterations repair it; failure to reach the constraints
raises LayoutFailureError.

Rasterization maps bond-length units onto 3 pixels each, centers the
molecule on the grid, draws every bond as a sampled line at intensity
0.2 x order (0.3 for aromatic), and overdraws every atom as one pixel at
intensity min(1, atomic_number / 80); where an atom and a bond share a
pixel the atom value wins.  Grid offsets are rounded half away from
zero, so a 90 degree rotation of the layout permutes pixels exactly and
the nonzero pixel count is rotation invariant.  Molecules whose scaled
extent exceeds the grid raise DoesNotFitError, which is the featurizer's
size-exclusion mechanism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DoesNotFitError, LayoutFailureError
from .smiles import BondOrder, MolecularGraph

__all__ = [
    "Layout2D",
    "ChemImage",
    "layout_2d",
    "rasterize",
    "render_molecule",
    "write_pgm",
    "PIXELS_PER_UNIT",
]

PIXELS_PER_UNIT = 3
BOND_TOLERANCE = 0.15
MIN_SEPARATION = 0.5
MAX_RELAX_ITERATIONS = 200


@dataclass
class Layout2D:
    """Per-atom coordinates in bond-length units.

    Atoms outside the largest connected component are not placed; their
    rows are NaN and ``placed`` is False.
    """

    positions: np.ndarray
    placed: np.ndarray
    bounding_box: tuple[float, float]

    def rotated90(self) -> "Layout2D":
        """Counterclockwise quarter turn, (x, y) -> (-y, x)."""
        rotated = np.empty_like(self.positions)
        rotated[:, 0] = -self.positions[:, 1]
        rotated[:, 1] = self.positions[:, 0]
        return Layout2D(
            positions=rotated,
            placed=self.placed.copy(),
            bounding_box=(self.bounding_box[1], self.bounding_box[0]),
        )


@dataclass
class ChemImage:
    """Square intensity grid in [0, 1]; background exactly 0."""

    pixels: np.ndarray
    side: int


# --------------------------------------------------------------------------
# Layout


def layout_2d(graph: MolecularGraph) -> Layout2D:
    """Assign 2D coordinates to the largest connected component.

    Args:
        graph: Parsed molecule.

    Returns:
        Layout with bonded atoms at unit distance (within 15%) and no
        two atoms closer than half a unit.

    Raises:
        LayoutFailureError: Constraints unreachable within the iteration
            budget (typically crowded bridged polycyclics).
    """
    n = len(graph.atoms)
    positions = np.full((n, 2), np.nan)
    if n == 0:
        return Layout2D(positions, np.zeros(0, dtype=bool), (0.0, 0.0))

    components = graph.connected_components()
    component = max(components, key=len)
    in_component = set(component)

    placed: set[int] = set()
    systems = _ring_systems(graph)
    system_of = {a: i for i, system in enumerate(systems) for a in system[0]}
    placed_systems: set[int] = set()

    def place_ring_system(index: int, entry: int) -> None:
        """Lay out every ring of one fused/spiro system, entry ring first."""
        placed_systems.add(index)
        for ring in _ring_order(systems[index][1], entry):
            _place_ring(graph, _ordered_cycle(graph, ring), positions, placed)

    start = component[0]
    if start in system_of:
        place_ring_system(system_of[start], start)
    else:
        positions[start] = (0.0, 0.0)
        placed.add(start)

    queue = sorted(placed)
    seen = set(queue)
    while queue:
        current = queue.pop(0)
        for neighbor, _ in sorted(graph.neighbor_bond_indices(current)):
            if neighbor not in in_component or neighbor in seen:
                continue
            if neighbor not in placed:
                _place_chain_atom(graph, neighbor, current, positions, placed)
                system = system_of.get(neighbor)
                if system is not None and system not in placed_systems:
                    place_ring_system(system, neighbor)
            seen.add(neighbor)
            queue.append(neighbor)

    indices = np.array(sorted(placed))
    if not _constraints_ok(graph, positions, indices):
        _relax(graph, positions, indices)
        if not _constraints_ok(graph, positions, indices):
            raise LayoutFailureError(
                "could not reach distance constraints within "
                f"{MAX_RELAX_ITERATIONS} iterations"
            )

    coords = positions[indices]
    box = (
        float(coords[:, 0].max() - coords[:, 0].min()),
        float(coords[:, 1].max() - coords[:, 1].min()),
    )
    placed_mask = np.zeros(n, dtype=bool)
    placed_mask[indices] = True
    return Layout2D(positions=positions, placed=placed_mask, bounding_box=box)


def _ring_systems(
    graph: MolecularGraph,
) -> list[tuple[set[int], list[list[int]]]]:
    """Group basis rings that share atoms; returns (atom set, rings)."""
    systems: list[tuple[set[int], list[list[int]]]] = []
    for ring in graph.rings:
        ring_atoms = set(ring)
        merged: tuple[set[int], list[list[int]]] | None = None
        remaining = []
        for atoms, rings in systems:
            if atoms & ring_atoms:
                if merged is None:
                    merged = (atoms | ring_atoms, rings + [ring])
                else:
                    merged = (merged[0] | atoms, merged[1] + rings)
            else:
                remaining.append((atoms, rings))
        systems = remaining + [merged if merged else (ring_atoms, [ring])]
    return systems


def _ring_order(rings: list[list[int]], entry: int) -> list[list[int]]:
    """Rings of one system ordered so each shares an atom with the prior."""
    pending = sorted(rings, key=lambda r: (entry not in r, sorted(r)))
    ordered = [pending.pop(0)]
    covered = set(ordered[0])
    while pending:
        for i, ring in enumerate(pending):
            if covered & set(ring):
                ordered.append(pending.pop(i))
                covered |= set(ring)
                break
        else:  # disconnected within system cannot happen, but stay safe
            ordered.append(pending.pop(0))
            covered |= set(ordered[-1])
    return ordered


def _ordered_cycle(graph: MolecularGraph, ring: list[int]) -> list[int]:
    """Ring atoms reordered so consecutive entries share bonds."""
    ring_set = set(ring)
    start = min(ring)
    cycle = [start]
    previous = -1
    while len(cycle) < len(ring):
        current = cycle[-1]
        nexts = sorted(
            nb
            for nb, _ in graph.neighbor_bond_indices(current)
            if nb in ring_set and nb != previous and nb not in cycle
        )
        if not nexts:
            return ring  # not a simple cycle; fall back to given order
        previous = current
        cycle.append(nexts[0])
    return cycle


def _polygon_positions(
    n: int, center: np.ndarray, start_angle: float, step: float
) -> list[np.ndarray]:
    radius = 1.0 / (2.0 * math.sin(math.pi / n))
    return [
        center
        + radius * np.array([math.cos(start_angle + k * step), math.sin(start_angle + k * step)])
        for k in range(n)
    ]


def _place_ring(
    graph: MolecularGraph,
    cycle: list[int],
    positions: np.ndarray,
    placed: set[int],
) -> None:
    n = len(cycle)
    step = 2.0 * math.pi / n
    ring_placed = [a for a in cycle if a in placed]

    if not ring_placed:
        # Only the very first ring of the molecule lands here.
        for atom, pos in zip(
            cycle, _polygon_positions(n, np.zeros(2), math.pi / 2.0, step)
        ):
            positions[atom] = pos
            placed.add(atom)
        return

    # Fused: find a placed adjacent pair in the cycle and reflect the new
    # polygon to the far side of that edge.
    edge = None
    for k in range(n):
        a, b = cycle[k], cycle[(k + 1) % n]
        if a in placed and b in placed:
            edge = (k, a, b)
            break
    if edge is not None:
        k, a, b = edge
        pa, pb = positions[a], positions[b]
        mid = (pa + pb) / 2.0
        edge_vec = pb - pa
        normal = np.array([-edge_vec[1], edge_vec[0]])
        norm_len = np.linalg.norm(normal)
        if norm_len < 1e-9:
            normal = np.array([0.0, 1.0])
            norm_len = 1.0
        normal = normal / norm_len
        # Pick the side away from atoms already placed around the edge.
        reference = _local_centroid(graph, (a, b), positions, placed)
        apothem = 1.0 / (2.0 * math.tan(math.pi / n))
        center = mid + apothem * normal
        if reference is not None and np.dot(center - mid, reference - mid) > 0:
            center = mid - apothem * normal
        start = math.atan2(pa[1] - center[1], pa[0] - center[0])
        to_b = math.atan2(pb[1] - center[1], pb[0] - center[0])
        forward = (to_b - start) % (2.0 * math.pi)
        signed_step = step if abs(forward - step) < 1e-6 else -step
        ordered = cycle[k:] + cycle[:k]
        for offset, atom in enumerate(ordered):
            if atom not in placed:
                angle = start + offset * signed_step
                radius = 1.0 / (2.0 * math.sin(math.pi / n))
                positions[atom] = center + radius * np.array(
                    [math.cos(angle), math.sin(angle)]
                )
                placed.add(atom)
        return

    # Spiro or bridged without a placed edge: anchor the polygon at the
    # first placed atom and point it into open space.
    anchor_atom = ring_placed[0]
    k = cycle.index(anchor_atom)
    direction = _open_direction(graph, anchor_atom, positions, placed)
    radius = 1.0 / (2.0 * math.sin(math.pi / n))
    center = positions[anchor_atom] + radius * np.array(
        [math.cos(direction), math.sin(direction)]
    )
    start = math.atan2(
        positions[anchor_atom][1] - center[1], positions[anchor_atom][0] - center[0]
    )
    ordered = cycle[k:] + cycle[:k]
    for offset, atom in enumerate(ordered):
        if atom not in placed:
            angle = start + offset * step
            positions[atom] = center + radius * np.array(
                [math.cos(angle), math.sin(angle)]
            )
            placed.add(atom)


def _local_centroid(
    graph: MolecularGraph,
    atoms: tuple[int, ...],
    positions: np.ndarray,
    placed: set[int],
) -> np.ndarray | None:
    """Mean position of placed neighbors of ``atoms`` (excluding them)."""
    points = []
    for atom in atoms:
        for nb, _ in graph.neighbor_bond_indices(atom):
            if nb in placed and nb not in atoms:
                points.append(positions[nb])
    if not points:
        return None
    return np.mean(points, axis=0)


def _open_direction(
    graph: MolecularGraph, atom: int, positions: np.ndarray, placed: set[int]
) -> float:
    """Angle bisecting the widest gap between placed neighbor directions."""
    angles = sorted(
        math.atan2(*(positions[nb] - positions[atom])[::-1])
        for nb, _ in graph.neighbor_bond_indices(atom)
        if nb in placed
    )
    if not angles:
        return 0.0
    if len(angles) == 1:
        return angles[0] + math.pi
    best_gap = -1.0
    best_angle = 0.0
    for i, angle in enumerate(angles):
        following = angles[(i + 1) % len(angles)]
        gap = (following - angle) % (2.0 * math.pi)
        if gap > best_gap + 1e-12:
            best_gap = gap
            best_angle = angle + gap / 2.0
    return best_angle


def _place_chain_atom(
    graph: MolecularGraph,
    atom: int,
    parent: int,
    positions: np.ndarray,
    placed: set[int],
) -> None:
    direction = _open_direction(graph, parent, positions, placed)
    positions[atom] = positions[parent] + np.array(
        [math.cos(direction), math.sin(direction)]
    )
    placed.add(atom)


def _constraints_ok(
    graph: MolecularGraph, positions: np.ndarray, indices: np.ndarray
) -> bool:
    index_set = set(int(i) for i in indices)
    for bond in graph.bonds:
        if bond.a in index_set and bond.b in index_set:
            d = float(np.linalg.norm(positions[bond.a] - positions[bond.b]))
            if not (1.0 - BOND_TOLERANCE <= d <= 1.0 + BOND_TOLERANCE):
                return False
    coords = positions[indices]
    if len(coords) > 1:
        deltas = coords[:, None, :] - coords[None, :, :]
        distances = np.sqrt((deltas**2).sum(axis=2))
        np.fill_diagonal(distances, np.inf)
        if distances.min() < MIN_SEPARATION:
            return False
    return True


def _relax(
    graph: MolecularGraph, positions: np.ndarray, indices: np.ndarray
) -> None:
    """Force-directed cleanup: bond springs plus short-range repulsion."""
    index_list = [int(i) for i in indices]
    index_set = set(index_list)
    bonds = [
        (bond.a, bond.b)
        for bond in graph.bonds
        if bond.a in index_set and bond.b in index_set
    ]
    for _ in range(MAX_RELAX_ITERATIONS):
        forces = np.zeros_like(positions)
        for a, b in bonds:
            delta = positions[b] - positions[a]
            d = float(np.linalg.norm(delta))
            if d < 1e-9:
                delta = np.array([1e-3, 0.0])
                d = 1e-3
            stretch = (d - 1.0) / d
            forces[a] += 0.5 * stretch * delta
            forces[b] -= 0.5 * stretch * delta
        coords = positions[index_list]
        deltas = coords[:, None, :] - coords[None, :, :]
        distances = np.sqrt((deltas**2).sum(axis=2))
        np.fill_diagonal(distances, np.inf)
        too_close = distances < 0.9
        if too_close.any():
            push = np.zeros_like(distances)
            np.divide(
                0.9 - distances,
                np.maximum(distances, 1e-9),
                out=push,
                where=too_close,
            )
            repulsion = (deltas * push[:, :, None]).sum(axis=1)
            for row, atom in enumerate(index_list):
                forces[atom] += 0.5 * repulsion[row]
        step = 0.3 * forces
        magnitude = np.sqrt((step**2).sum(axis=1, keepdims=True))
        step = np.where(magnitude > 0.2, step * 0.2 / np.maximum(magnitude, 1e-12), step)
        positions += step
        if float(np.abs(step[index_list]).max()) < 1e-5:
            break
        if _constraints_ok(graph, positions, indices):
            break


# --------------------------------------------------------------------------
# Rasterization


def _round_half_away(value: float) -> int:
    return int(math.floor(value + 0.5)) if value >= 0 else -int(math.floor(-value + 0.5))


def rasterize(graph: MolecularGraph, layout: Layout2D, side: int = 60) -> ChemImage:
    """Draw the laid-out molecule onto a side x side grid.

    Args:
        graph: Parsed molecule.
        layout: Coordinates from :func:`layout_2d`.
        side: Grid size in pixels.

    Returns:
        ChemImage with intensities in [0, 1].

    Raises:
        DoesNotFitError: The molecule needs more pixels than the grid
            provides at 3 px per bond unit.
    """
    placed_indices = [i for i in range(len(graph.atoms)) if layout.placed[i]]
    atom_layer = np.zeros((side, side), dtype=np.float64)
    bond_layer = np.zeros((side, side), dtype=np.float64)
    if not placed_indices:
        return ChemImage(pixels=atom_layer.astype(np.float32), side=side)

    coords = layout.positions[placed_indices]
    center = np.array(
        [
            (coords[:, 0].min() + coords[:, 0].max()) / 2.0,
            (coords[:, 1].min() + coords[:, 1].max()) / 2.0,
        ]
    )
    half = (side - 1) // 2

    offsets: dict[int, tuple[int, int]] = {}
    max_offset = 0
    for i in placed_indices:
        dx = PIXELS_PER_UNIT * (layout.positions[i][0] - center[0])
        dy = PIXELS_PER_UNIT * (layout.positions[i][1] - center[1])
        px, py = _round_half_away(float(dx)), _round_half_away(float(dy))
        offsets[i] = (px, py)
        max_offset = max(max_offset, abs(px), abs(py))
    if max_offset > half:
        raise DoesNotFitError(2 * max_offset + 1, side)

    def pixel(px: int, py: int) -> tuple[int, int]:
        return side // 2 - py, side // 2 + px

    placed_set = set(placed_indices)
    for bond in graph.bonds:
        if bond.a not in placed_set or bond.b not in placed_set:
            continue
        if bond.order == BondOrder.AROMATIC:
            intensity = 0.3
        else:
            intensity = 0.2 * int(bond.order)
        start = PIXELS_PER_UNIT * (layout.positions[bond.a] - center)
        end = PIXELS_PER_UNIT * (layout.positions[bond.b] - center)
        length = float(np.linalg.norm(end - start))
        samples = max(2, int(math.ceil(length * 4.0)) + 1)
        for t in np.linspace(0.0, 1.0, samples):
            point = (1.0 - t) * start + t * end
            row, col = pixel(
                _round_half_away(float(point[0])), _round_half_away(float(point[1]))
            )
            bond_layer[row, col] = max(bond_layer[row, col], intensity)

    for i in placed_indices:
        row, col = pixel(*offsets[i])
        value = min(1.0, graph.atoms[i].element / 80.0)
        atom_layer[row, col] = max(atom_layer[row, col], value)

    pixels = np.where(atom_layer > 0, atom_layer, bond_layer).astype(np.float32)
    return ChemImage(pixels=pixels, side=side)


def render_molecule(graph: MolecularGraph, side: int = 60) -> ChemImage:
    """Layout and rasterize in one step."""
    return rasterize(graph, layout_2d(graph), side=side)


def write_pgm(image: ChemImage, path: str | Path) -> None:
    """Dump as a binary portable graymap for visual inspection."""
    levels = np.clip(np.round(image.pixels * 255.0), 0, 255).astype(np.uint8)
    header = f"P5\n{image.side} {image.side}\n255\n".encode()
    Path(path).write_bytes(header + levels.tobytes())
