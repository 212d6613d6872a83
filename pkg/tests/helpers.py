"""Independent oracles used by the tests: attribute-aware graph isomorphism
(with tetrahedral parity) and brute-force automorphism orbits."""

from __future__ import annotations

import itertools

from hsqcnet.molgraph import (
    BondDirection,
    Chirality,
    MolecularGraph,
    canonical_equivalence_classes,
    infer_hybridization,
)


def _flip(direction: BondDirection) -> BondDirection:
    if direction is BondDirection.END_UP_RIGHT:
        return BondDirection.END_DOWN_RIGHT
    if direction is BondDirection.END_DOWN_RIGHT:
        return BondDirection.END_UP_RIGHT
    return direction


def _atom_key(graph: MolecularGraph, i: int) -> tuple:
    a = graph.atoms[i]
    return (a.element, a.is_aromatic, a.formal_charge, a.implicit_h,
            len(graph.adjacency[i]))


def _bond_image_ok(g1: MolecularGraph, g2: MolecularGraph, u, v, mu, mv) -> bool:
    if mv not in g2.adjacency[mu]:
        return False
    b1 = g1.bond_between(u, v)
    b2 = g2.bond_between(mu, mv)
    if b1.bond_type is not b2.bond_type:
        return False
    d1 = b1.direction if b1.endpoints == (u, v) else _flip(b1.direction)
    d2 = b2.direction if b2.endpoints == (mu, mv) else _flip(b2.direction)
    return d1 is d2


def _permutation_parity_odd(reference: list[int], image: list[int]) -> bool:
    ref = list(reference)
    used = [False] * len(ref)
    perm = []
    for item in image:
        for k, r in enumerate(ref):
            if not used[k] and r == item:
                used[k] = True
                perm.append(k)
                break
        else:
            return False
    swaps = 0
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            swaps += 1
    return swaps % 2 == 1


def _chirality_consistent(g1, g2, mapping: dict[int, int]) -> bool:
    for i, j in mapping.items():
        c1, c2 = g1.atoms[i].chirality, g2.atoms[j].chirality
        loose = (Chirality.NONE, Chirality.OTHER)
        if c1 in loose or c2 in loose:
            if (c1 in loose) != (c2 in loose):
                return False
            continue
        r1 = g1.chiral_order.get(i)
        r2 = g2.chiral_order.get(j)
        if r1 is None or r2 is None:
            if c1 is not c2:
                return False
            continue
        image = [mapping.get(x, -1) if x >= 0 else -1 for x in r1]
        if sorted(image) != sorted(r2):
            return False
        odd = _permutation_parity_odd(r2, image)
        same = c1 is c2
        if odd == same:  # odd parity must flip the mark, even must keep it
            return False
    return True


def graphs_isomorphic(g1: MolecularGraph, g2: MolecularGraph) -> bool:
    """Backtracking isomorphism over atoms, bonds, charges, aromaticity,
    implicit hydrogen counts, bond types/directions, and tetrahedral parity."""
    if len(g1.atoms) != len(g2.atoms) or len(g1.bonds) != len(g2.bonds):
        return False
    c1 = canonical_equivalence_classes(infer_hybridization(g1)).class_id
    c2 = canonical_equivalence_classes(infer_hybridization(g2)).class_id
    if sorted(c1) != sorted(c2):
        return False
    n = len(g1.atoms)
    order = sorted(range(n), key=lambda i: (-len(g1.adjacency[i]), c1[i]))
    candidates = {
        i: [j for j in range(n) if c2[j] == c1[i] and _atom_key(g2, j) == _atom_key(g1, i)]
        for i in order
    }

    mapping: dict[int, int] = {}
    used: set[int] = set()

    def extend(k: int) -> bool:
        if k == n:
            return _chirality_consistent(g1, g2, mapping)
        i = order[k]
        for j in candidates[i]:
            if j in used:
                continue
            ok = True
            for nb in g1.adjacency[i]:
                if nb in mapping and not _bond_image_ok(g1, g2, i, nb, j, mapping[nb]):
                    ok = False
                    break
            if not ok:
                continue
            mapping[i] = j
            used.add(j)
            if extend(k + 1):
                return True
            del mapping[i]
            used.discard(j)
        return False

    return extend(0)


def automorphism_orbits(graph: MolecularGraph) -> list[int]:
    """Orbits of the automorphism group by exhaustive search over
    attribute-preserving permutations (small graphs only)."""
    n = len(graph.atoms)
    groups: dict[tuple, list[int]] = {}
    for i in range(n):
        groups.setdefault(_atom_key(graph, i), []).append(i)

    group_lists = list(groups.values())
    orbit_parent = list(range(n))

    def find(x: int) -> int:
        while orbit_parent[x] != x:
            orbit_parent[x] = orbit_parent[orbit_parent[x]]
            x = orbit_parent[x]
        return x

    def union(a: int, b: int) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            orbit_parent[rb] = ra

    for perms in itertools.product(*[itertools.permutations(g) for g in group_lists]):
        mapping = {}
        for members, image in zip(group_lists, perms):
            for src, dst in zip(members, image):
                mapping[src] = dst
        ok = True
        for bond in graph.bonds:
            u, v = bond.endpoints
            if not _bond_image_ok(graph, graph, u, v, mapping[u], mapping[v]):
                ok = False
                break
        if ok:
            for src, dst in mapping.items():
                union(src, dst)
    labels = [find(i) for i in range(n)]
    dense = {lab: k for k, lab in enumerate(sorted(set(labels)))}
    return [dense[lab] for lab in labels]
