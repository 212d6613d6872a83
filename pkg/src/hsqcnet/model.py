"""Cross-peak prediction network.

A message-passing graph network over atoms (hydrogens included as nodes)
feeds two MLP heads: one predicting the carbon shift of each C-H unit from
the carbon embedding, one predicting a pair of proton shifts from the
carbon embedding, the mean of its bonded-hydrogen embeddings, and a learned
solvent vector. Symmetry-equivalent units emit through one representative;
methylene units may emit two peaks.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .elements import SYMBOL_INDEX
from .molgraph import (
    BondDirection,
    BondType,
    CHUnit,
    Chirality,
    EquivalenceClasses,
    Hybridization,
    MolecularGraph,
    add_explicit_hydrogens,
    canonical_equivalence_classes,
    enumerate_ch_units,
    infer_hybridization,
)
from .smiles import parse_smiles


class SolventClass(Enum):
    CHLOROFORM = "chloroform"
    DMSO = "dmso"
    ACETONE = "acetone"
    ACIDS = "acids"
    BENZENE = "benzene"
    METHANOL = "methanol"
    PYRIDINE = "pyridine"
    WATER = "water"
    UNKNOWN = "unknown"


SOLVENT_INDEX = {s: i for i, s in enumerate(SolventClass)}
NAMED_SOLVENTS = tuple(s for s in SolventClass if s is not SolventClass.UNKNOWN)

_CHIRALITY_INDEX = {c: i for i, c in enumerate(Chirality)}
_HYBRID_INDEX = {h: i for i, h in enumerate(Hybridization)}
_BOND_INDEX = {b: i for i, b in enumerate(BondType)}
_DIRECTION_INDEX = {d: i for i, d in enumerate(BondDirection)}


@dataclass(frozen=True)
class ModelConfig:
    """Architecture knobs. Defaults are desk scale; the reference scale uses
    atom_dim=512. Output heads work in normalized units; the center/scale
    constants map them to ppm. Centers sit mid-range of common organic
    shifts, and the carbon/proton scale ratio mirrors the 10:1 dispersion
    (and instrument resolution) ratio between the two nuclei."""

    num_layers: int = 5
    atom_dim: int = 64
    solvent_dim_h: int = 32
    solvent_dim_c: int = 0
    mlp_hidden: tuple[int, int] = (128, 64)
    merge_tolerance_h: float = 0.01
    seed: int = 0
    c_center: float = 70.0
    c_scale: float = 30.0
    h_center: float = 4.0
    h_scale: float = 3.0

    def __post_init__(self) -> None:
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if min(self.atom_dim, self.solvent_dim_h, *self.mlp_hidden) <= 0:
            raise ValueError("dimensions must be positive")
        if self.solvent_dim_c < 0:
            raise ValueError("solvent_dim_c must be >= 0")

    def to_dict(self) -> dict:
        return {
            "num_layers": self.num_layers,
            "atom_dim": self.atom_dim,
            "solvent_dim_h": self.solvent_dim_h,
            "solvent_dim_c": self.solvent_dim_c,
            "mlp_hidden": list(self.mlp_hidden),
            "merge_tolerance_h": self.merge_tolerance_h,
            "seed": self.seed,
            "c_center": self.c_center,
            "c_scale": self.c_scale,
            "h_center": self.h_center,
            "h_scale": self.h_scale,
        }

    @staticmethod
    def from_dict(data: dict) -> "ModelConfig":
        data = dict(data)
        if "mlp_hidden" in data:
            data["mlp_hidden"] = tuple(data["mlp_hidden"])
        return ModelConfig(**data)


@dataclass(frozen=True)
class PredictedPeak:
    ch_unit: CHUnit
    delta_c: float
    delta_h: float
    peak_slot: int


@dataclass
class Molecule:
    """A parsed structure with everything the model needs precomputed."""

    smiles: str
    graph: MolecularGraph  # hydrogens explicit, hybridization inferred
    classes: EquivalenceClasses
    units: list[CHUnit]


def prepare_molecule(source: str | MolecularGraph) -> Molecule:
    graph = parse_smiles(source) if isinstance(source, str) else source
    expanded = infer_hybridization(add_explicit_hydrogens(graph))
    classes = canonical_equivalence_classes(expanded)
    units = enumerate_ch_units(expanded, classes)
    return Molecule(
        smiles=graph.source_smiles, graph=expanded, classes=classes, units=units
    )


@dataclass
class PeakTensors:
    """Raw-head outputs for one emitted peak, kept for gradient flow."""

    unit: CHUnit
    slot: int
    raw_c: Tensor
    raw_h: Tensor
    delta_c: float
    delta_h: float


def _parameter_shapes(config: ModelConfig) -> list[tuple[str, tuple[int, ...], int]]:
    d = config.atom_dim
    shapes: list[tuple[str, tuple[int, ...], int]] = [
        ("embed.element", (len(SYMBOL_INDEX), d), d),
        ("embed.chirality", (len(Chirality), d), d),
        ("embed.hybridization", (len(Hybridization), d), d),
        ("embed.bond_type", (len(BondType), d), d),
        ("embed.direction", (len(BondDirection), d), d),
        ("embed.solvent_h", (len(SolventClass), config.solvent_dim_h), config.solvent_dim_h),
    ]
    if config.solvent_dim_c > 0:
        shapes.append(
            ("embed.solvent_c", (len(SolventClass), config.solvent_dim_c), config.solvent_dim_c)
        )
    for layer in range(1, config.num_layers + 1):
        shapes.append((f"layer{layer}.msg.w", (d, 2 * d), 2 * d))
        shapes.append((f"layer{layer}.msg.b", (d,), 2 * d))
        shapes.append((f"layer{layer}.upd.w", (d, 2 * d), 2 * d))
        shapes.append((f"layer{layer}.upd.b", (d,), 2 * d))
    h1, h2 = config.mlp_hidden
    c_in = d + config.solvent_dim_c
    h_in = 2 * d + config.solvent_dim_h
    for prefix, width_in, width_out in (
        ("c_head", c_in, 1),
        ("h_head", h_in, 2),
    ):
        shapes.append((f"{prefix}.w1", (h1, width_in), width_in))
        shapes.append((f"{prefix}.b1", (h1,), width_in))
        shapes.append((f"{prefix}.w2", (h2, h1), h1))
        shapes.append((f"{prefix}.b2", (h2,), h1))
        shapes.append((f"{prefix}.w3", (width_out, h2), h2))
        shapes.append((f"{prefix}.b3", (width_out,), h2))
    return shapes


def count_parameters(config: ModelConfig) -> int:
    """Total scalar parameter count implied by a config."""
    total = 0
    for _, shape, _ in _parameter_shapes(config):
        n = 1
        for s in shape:
            n *= s
        total += n
    return total


class CrossPeakModel:
    def __init__(self, config: ModelConfig, state: dict[str, np.ndarray] | None = None):
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.params: dict[str, Parameter] = {}
        for name, shape, fan_in in _parameter_shapes(config):
            self.params[name] = ad.uniform_init(rng, shape, fan_in, name)
        if state is not None:
            self.load_state(state)

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.values.copy() for name, p in self.params.items()}

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(arrays)
        extra = set(arrays) - set(self.params)
        if missing or extra:
            raise ValueError(
                f"parameter set mismatch: missing {sorted(missing)}, "
                f"unexpected {sorted(extra)}"
            )
        for name, p in self.params.items():
            incoming = np.asarray(arrays[name], dtype=np.float64)
            if incoming.shape != p.values.shape:
                raise ValueError(
                    f"shape mismatch for {name}: checkpoint {incoming.shape} "
                    f"vs config {p.values.shape}"
                )
            p.values[...] = incoming

    def count_parameters(self) -> int:
        return count_parameters(self.config)

    # -- encoders -----------------------------------------------------------

    def encode_atoms(self, graph: MolecularGraph) -> list[list[Tensor]]:
        """Per-layer node embeddings, layers 0..L; hydrogens are nodes."""
        p = self.params
        d = self.config.atom_dim
        h: list[Tensor] = []
        for atom in graph.atoms:
            if atom.hybridization is Hybridization.UNSPECIFIED:
                raise ValueError(
                    f"atom {atom.index} has uninferred hybridization; run "
                    "infer_hybridization first"
                )
            h.append(
                ad.neighbor_sum(
                    [
                        ad.embedding_lookup(p["embed.element"], SYMBOL_INDEX[atom.element]),
                        ad.embedding_lookup(p["embed.chirality"], _CHIRALITY_INDEX[atom.chirality]),
                        ad.embedding_lookup(p["embed.hybridization"], _HYBRID_INDEX[atom.hybridization]),
                    ]
                )
            )
        edge: dict[frozenset[int], Tensor] = {}
        for bond in graph.bonds:
            edge[frozenset(bond.endpoints)] = ad.neighbor_sum(
                [
                    ad.embedding_lookup(p["embed.bond_type"], _BOND_INDEX[bond.bond_type]),
                    ad.embedding_lookup(p["embed.direction"], _DIRECTION_INDEX[bond.direction]),
                ]
            )
        layers = [h]
        for layer in range(1, self.config.num_layers + 1):
            w_msg, b_msg = p[f"layer{layer}.msg.w"], p[f"layer{layer}.msg.b"]
            w_upd, b_upd = p[f"layer{layer}.upd.w"], p[f"layer{layer}.upd.b"]
            prev = layers[-1]
            nxt: list[Tensor] = []
            for atom in graph.atoms:
                v = atom.index
                messages = [
                    ad.relu(
                        ad.affine(
                            ad.concat([prev[u], edge[frozenset((u, v))]]), w_msg, b_msg
                        )
                    )
                    for u in graph.adjacency[v]
                ]
                m = ad.neighbor_sum(messages, width=d)
                pre = ad.affine(ad.concat([prev[v], m]), w_upd, b_upd)
                nxt.append(pre if layer == self.config.num_layers else ad.relu(pre))
            layers.append(nxt)
        return layers

    def encode_solvent(self, solvent: SolventClass) -> Tensor:
        return ad.embedding_lookup(
            self.params["embed.solvent_h"], SOLVENT_INDEX[solvent]
        )

    def _mlp(self, prefix: str, x: Tensor) -> Tensor:
        p = self.params
        h1 = ad.relu(ad.affine(x, p[f"{prefix}.w1"], p[f"{prefix}.b1"]))
        h2 = ad.relu(ad.affine(h1, p[f"{prefix}.w2"], p[f"{prefix}.b2"]))
        return ad.affine(h2, p[f"{prefix}.w3"], p[f"{prefix}.b3"])

    # -- heads --------------------------------------------------------------

    def _unit_head_tensors(
        self, molecule: Molecule, solvent: SolventClass
    ) -> list[tuple[CHUnit, Tensor, Tensor]]:
        """(unit, raw carbon scalar, raw 2-vector of proton outputs) per
        representative C-H unit."""
        final = self.encode_atoms(molecule.graph)[-1]
        s_h = self.encode_solvent(solvent)
        out = []
        for unit in molecule.units:
            if not unit.is_representative:
                continue
            h_c = final[unit.carbon_index]
            if self.config.solvent_dim_c > 0:
                s_c = ad.embedding_lookup(
                    self.params["embed.solvent_c"], SOLVENT_INDEX[solvent]
                )
                c_in = ad.concat([h_c, s_c])
            else:
                c_in = h_c
            raw_c = ad.component(self._mlp("c_head", c_in), 0)
            h_mean = ad.scale(
                ad.neighbor_sum([final[j] for j in unit.hydrogen_indices]),
                1.0 / len(unit.hydrogen_indices),
            )
            raw_h = self._mlp("h_head", ad.concat([h_c, h_mean, s_h]))
            out.append((unit, raw_c, raw_h))
        return out

    def peak_tensors(
        self, molecule: Molecule, solvent: SolventClass
    ) -> list[PeakTensors]:
        """Emitted peaks with live tensors; the training path."""
        cfg = self.config
        peaks: list[PeakTensors] = []
        for unit, raw_c, raw_h in self._unit_head_tensors(molecule, solvent):
            delta_c = cfg.c_center + cfg.c_scale * raw_c.item()
            slot_a = ad.component(raw_h, 0)
            slot_b = ad.component(raw_h, 1)
            ppm_a = cfg.h_center + cfg.h_scale * slot_a.item()
            ppm_b = cfg.h_center + cfg.h_scale * slot_b.item()
            merged = ad.scale(ad.neighbor_sum([slot_a, slot_b]), 0.5)
            if unit.max_peaks == 1 or abs(ppm_a - ppm_b) < cfg.merge_tolerance_h:
                peaks.append(
                    PeakTensors(unit, 1, raw_c, merged, delta_c, (ppm_a + ppm_b) / 2)
                )
            else:
                peaks.append(PeakTensors(unit, 1, raw_c, slot_a, delta_c, ppm_a))
                peaks.append(PeakTensors(unit, 2, raw_c, slot_b, delta_c, ppm_b))
        return peaks

    def predict_cross_peaks(
        self, molecule: Molecule, solvent: SolventClass
    ) -> list[PredictedPeak]:
        peaks = [
            PredictedPeak(pt.unit, pt.delta_c, pt.delta_h, pt.slot)
            for pt in self.peak_tensors(molecule, solvent)
        ]
        for peak in peaks:
            if not (np.isfinite(peak.delta_c) and np.isfinite(peak.delta_h)):
                raise FloatingPointError(
                    f"non-finite prediction for carbon {peak.ch_unit.carbon_index}"
                )
        return peaks

    def atom_shift_tensors(
        self,
        molecule: Molecule,
        solvent: SolventClass,
        need_c: list[int],
        need_h: list[int],
    ) -> tuple[dict[int, Tensor], dict[int, Tensor]]:
        """Raw per-atom shift tensors for 1D supervision.

        Carbon targets may name any carbon. Proton targets name hydrogen
        atoms; each resolves to the mean of its carbon's two proton-head
        outputs (1D references average inequivalent protons). A target atom
        the model cannot cover raises ValueError.
        """
        graph = molecule.graph
        final = self.encode_atoms(graph)[-1]
        s_h = self.encode_solvent(solvent)
        c_out: dict[int, Tensor] = {}
        for idx in need_c:
            if idx >= len(graph.atoms) or graph.atoms[idx].element != "C":
                raise ValueError(f"carbon target index {idx} is not a carbon atom")
            h_c = final[idx]
            if self.config.solvent_dim_c > 0:
                s_c = ad.embedding_lookup(
                    self.params["embed.solvent_c"], SOLVENT_INDEX[solvent]
                )
                c_in = ad.concat([h_c, s_c])
            else:
                c_in = h_c
            c_out[idx] = ad.component(self._mlp("c_head", c_in), 0)
        h_out: dict[int, Tensor] = {}
        carbon_cache: dict[int, Tensor] = {}
        for idx in need_h:
            if idx >= len(graph.atoms) or graph.atoms[idx].element != "H":
                raise ValueError(f"proton target index {idx} is not a hydrogen atom")
            carbons = [
                nb for nb in graph.adjacency[idx] if graph.atoms[nb].element == "C"
            ]
            if not carbons:
                raise ValueError(
                    f"no prediction covers hydrogen {idx}: not bonded to carbon"
                )
            carbon = carbons[0]
            if carbon not in carbon_cache:
                hydrogens = [
                    nb
                    for nb in graph.adjacency[carbon]
                    if graph.atoms[nb].element == "H"
                ]
                h_mean = ad.scale(
                    ad.neighbor_sum([final[j] for j in hydrogens]),
                    1.0 / len(hydrogens),
                )
                raw_h = self._mlp("h_head", ad.concat([final[carbon], h_mean, s_h]))
                carbon_cache[carbon] = ad.scale(
                    ad.neighbor_sum([ad.component(raw_h, 0), ad.component(raw_h, 1)]),
                    0.5,
                )
            h_out[idx] = carbon_cache[carbon]
        return c_out, h_out

    # -- unit conversions ----------------------------------------------------

    def normalize_c(self, ppm: float) -> float:
        return (ppm - self.config.c_center) / self.config.c_scale

    def normalize_h(self, ppm: float) -> float:
        return (ppm - self.config.h_center) / self.config.h_scale

    def ppm_c(self, raw: float) -> float:
        return self.config.c_center + self.config.c_scale * raw

    def ppm_h(self, raw: float) -> float:
        return self.config.h_center + self.config.h_scale * raw
