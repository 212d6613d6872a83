from __future__ import annotations

import numpy as np
import pytest

from hsqcnet.model import (
    CrossPeakModel,
    ModelConfig,
    SolventClass,
    _parameter_shapes,
    count_parameters,
    prepare_molecule,
)
from hsqcnet.molgraph import relabel_atoms
from hsqcnet.smiles import parse_smiles


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(num_layers=0)
    with pytest.raises(ValueError):
        ModelConfig(atom_dim=0)
    with pytest.raises(ValueError):
        ModelConfig(solvent_dim_c=-1)


def test_solvent_class_has_nine_members():
    assert len(SolventClass) == 9


def test_count_parameters_desk_default_pinned():
    assert count_parameters(ModelConfig()) == 136995


def test_count_parameters_matches_declared_shapes():
    config = ModelConfig(num_layers=3, atom_dim=24, solvent_dim_h=8, mlp_hidden=(16, 12))
    total = 0
    for _name, shape, _fan in _parameter_shapes(config):
        size = 1
        for s in shape:
            size *= s
        total += size
    assert count_parameters(config) == total
    model = CrossPeakModel(config)
    assert sum(p.values.size for p in model.parameters()) == total


def test_count_parameters_monotone_in_width():
    small = count_parameters(ModelConfig(atom_dim=32))
    large = count_parameters(ModelConfig(atom_dim=64))
    assert large > small


def test_count_parameters_deterministic():
    config = ModelConfig()
    assert count_parameters(config) == count_parameters(ModelConfig())


def test_init_deterministic_by_seed(tiny_config):
    a = CrossPeakModel(tiny_config)
    b = CrossPeakModel(tiny_config)
    for name in a.params:
        assert np.array_equal(a.params[name].values, b.params[name].values)


def test_benzene_embeddings_identical(tiny_config):
    model = CrossPeakModel(tiny_config)
    mol = prepare_molecule("c1ccccc1")
    layers = model.encode_atoms(mol.graph)
    for layer in layers:
        first = layer[0].values
        for i in range(1, 6):
            assert np.allclose(layer[i].values, first, atol=1e-12, rtol=0)


def test_single_atom_graph_message_is_zero(tiny_config):
    model = CrossPeakModel(tiny_config)
    mol = prepare_molecule("[Na+]")
    layers = model.encode_atoms(mol.graph)
    assert len(layers) == tiny_config.num_layers + 1
    assert np.all(np.isfinite(layers[-1][0].values))


def test_uninferred_hybridization_rejected(tiny_config):
    from hsqcnet.molgraph import add_explicit_hydrogens

    graph = add_explicit_hydrogens(parse_smiles("C"))  # no inference step
    model = CrossPeakModel(tiny_config)
    with pytest.raises(ValueError, match="hybridization"):
        model.encode_atoms(graph)


def test_permutation_equivariance_embeddings(tiny_config):
    model = CrossPeakModel(tiny_config)
    mol = prepare_molecule("CCO")
    rng = np.random.default_rng(5)
    base = model.encode_atoms(mol.graph)[-1]
    n = len(mol.graph.atoms)
    perm = list(rng.permutation(n))
    permuted = relabel_atoms(mol.graph, perm)
    layers = model.encode_atoms(permuted)[-1]
    for v in range(n):
        assert np.allclose(
            layers[perm[v]].values, base[v].values, atol=1e-12, rtol=0
        )


def test_peak_counts():
    model = CrossPeakModel(ModelConfig(num_layers=2, atom_dim=10, solvent_dim_h=4, mlp_hidden=(8, 6)))
    assert len(model.predict_cross_peaks(prepare_molecule("C"), SolventClass.UNKNOWN)) == 1
    assert len(model.predict_cross_peaks(prepare_molecule("c1ccccc1"), SolventClass.UNKNOWN)) == 1
    ethanol = model.predict_cross_peaks(prepare_molecule("CCO"), SolventClass.UNKNOWN)
    assert 2 <= len(ethanol) <= 3
    # methylene peaks share their carbon shift
    ch2 = [p for p in ethanol if p.ch_unit.carbon_index == 1]
    assert len({p.delta_c for p in ch2}) == 1


def test_carbon_free_molecule_empty():
    model = CrossPeakModel(ModelConfig(num_layers=1, atom_dim=8, solvent_dim_h=4, mlp_hidden=(6, 5)))
    assert model.predict_cross_peaks(prepare_molecule("O"), SolventClass.UNKNOWN) == []


def test_solvent_changes_h_not_c(tiny_config):
    model = CrossPeakModel(tiny_config)
    mol = prepare_molecule("CCO")
    for solvent in SolventClass:
        peaks = model.predict_cross_peaks(mol, solvent)
        ref = model.predict_cross_peaks(mol, SolventClass.CHLOROFORM)
        assert [p.delta_c for p in peaks] == [p.delta_c for p in ref]
    a = model.predict_cross_peaks(mol, SolventClass.CHLOROFORM)
    b = model.predict_cross_peaks(mol, SolventClass.WATER)
    assert any(x.delta_h != y.delta_h for x, y in zip(a, b))


def test_unknown_solvent_is_a_learned_row(tiny_config):
    model = CrossPeakModel(tiny_config)
    vec = model.encode_solvent(SolventClass.UNKNOWN)
    assert np.any(vec.values != 0.0)


def test_solvent_rows_independent(tiny_config):
    import hsqcnet.autodiff as ad

    model = CrossPeakModel(tiny_config)
    table = model.params["embed.solvent_h"]
    with ad.ComputeRecord() as rec:
        loss = ad.mean(model.encode_solvent(SolventClass.DMSO))
    ad.backward(loss, rec)
    dmso_row = list(SolventClass).index(SolventClass.DMSO)
    for row in range(table.values.shape[0]):
        if row == dmso_row:
            assert np.any(table.grad[row] != 0.0)
        else:
            assert np.all(table.grad[row] == 0.0)
    ad.zero_gradients(model.parameters())


def test_merge_tolerance_collapses_methylene():
    config = ModelConfig(num_layers=1, atom_dim=8, solvent_dim_h=4,
                         mlp_hidden=(6, 5), merge_tolerance_h=1e9)
    model = CrossPeakModel(config)
    peaks = model.predict_cross_peaks(prepare_molecule("CCO"), SolventClass.UNKNOWN)
    assert len(peaks) == 2  # huge tolerance merges the CH2 pair


def test_predictions_finite_and_deterministic(tiny_config):
    model = CrossPeakModel(tiny_config)
    mol = prepare_molecule("Cc1ccc(C)cc1")
    a = model.predict_cross_peaks(mol, SolventClass.BENZENE)
    b = model.predict_cross_peaks(mol, SolventClass.BENZENE)
    assert [(p.delta_c, p.delta_h) for p in a] == [(p.delta_c, p.delta_h) for p in b]
    assert all(np.isfinite(p.delta_c) and np.isfinite(p.delta_h) for p in a)


def test_state_round_trip(tiny_config):
    model = CrossPeakModel(tiny_config)
    state = model.state_arrays()
    other = CrossPeakModel(tiny_config)
    for p in other.parameters():
        p.values += 1.0
    other.load_state(state)
    for name in state:
        assert np.array_equal(other.params[name].values, state[name])
    bad = dict(state)
    bad.pop(next(iter(bad)))
    with pytest.raises(ValueError, match="mismatch"):
        other.load_state(bad)


def test_solvent_dim_c_adds_table():
    with_c = ModelConfig(num_layers=1, atom_dim=8, solvent_dim_h=4,
                         solvent_dim_c=3, mlp_hidden=(6, 5))
    model = CrossPeakModel(with_c)
    assert "embed.solvent_c" in model.params
    mol = prepare_molecule("C")
    a = model.predict_cross_peaks(mol, SolventClass.CHLOROFORM)
    b = model.predict_cross_peaks(mol, SolventClass.WATER)
    assert a[0].delta_c != b[0].delta_c  # carbon head now sees the solvent


def test_peak_count_formula_over_corpus(parser_corpus, tiny_config):
    # emitted peaks = hydrogen-bearing carbon classes, plus one extra slot
    # per representative methylene whose proton pair did not merge
    model = CrossPeakModel(tiny_config)
    for entry in parser_corpus["molecules"][::3]:
        mol = prepare_molecule(entry["smiles"])
        peaks = model.predict_cross_peaks(mol, SolventClass.UNKNOWN)
        classes_with_h = len({u.equivalence_key for u in mol.units})
        extra = sum(1 for p in peaks if p.peak_slot == 2)
        assert len(peaks) == classes_with_h + extra
        rep_ch2 = sum(1 for u in mol.units if u.is_representative and u.max_peaks == 2)
        assert extra <= rep_ch2
