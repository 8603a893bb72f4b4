# src/test_icinet.py

from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.channel.ofdm_channel import PilotPattern, qpsk_modulate
from src.errors import NumericalError, ShapeError
from src.icinet.casresnet import CasResNetConfig, build_casresnet, casresnet_refine
from src.icinet.model import ICINet, create_predn, icinet_forward, load_icinet, save_icinet
from src.icinet.predn import (
    PreDnnConfig,
    assemble_grid_features,
    assemble_predn_input,
    build_predn,
    predn_refine,
)
from src.icinet.training import (
    TrainingConfig,
    TrainingSet,
    train_casresnet_only,
    train_end_to_end,
    train_predn,
    train_sequential,
)
from src.nn.gradcheck import gradient_check
from src.nn.network import count_macs, count_params, init_params


def _complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture
def grids():
    rng = np.random.default_rng(10)
    return _complex(rng, (64, 4)), _complex(rng, (64, 4)), _complex(rng, (64, 4))


def _static_training_set(count, seed, K=16, T=6):
    """Noiseless flat static channels, so the stage-1 estimate equals the truth."""
    rng = np.random.default_rng(seed)
    pattern = PilotPattern.grid(K, T, spacing=4, symbol_indices=(1, 4), seed=seed)
    X = qpsk_modulate(rng.integers(0, 2, size=(count, K, T, 2)))
    pattern.place(X, pattern.pilot_symbols)
    gains = _complex(rng, (count, 1, 1)) / np.sqrt(2)
    H = np.broadcast_to(gains, (count, K, T)).copy()
    return TrainingSet.build(H * X, H, pattern)


# ------------------------------
# 1. PreDNN input assembly
# ------------------------------
@pytest.mark.parametrize("n_ici", [0, 1, 2, 3, 4])
def test_input_width_law(grids, n_ici):
    Y, X_hat, H_hat = grids
    vector = assemble_predn_input(Y, X_hat, H_hat, 5, 2, n_ici, 64)
    assert vector.shape == (8 * n_ici + 6,)
    assert PreDnnConfig(n_ici=n_ici).input_width == 8 * n_ici + 6


def test_first_subcarrier_wraps_to_the_last(grids):
    Y, X_hat, H_hat = grids
    t = 3
    vector = assemble_predn_input(Y, X_hat, H_hat, 0, t, 1, 64)
    order = [Y[63, t], Y[0, t], Y[1, t], X_hat[63, t], X_hat[0, t], X_hat[1, t], H_hat[0, t]]
    expected = np.array([part for value in order for part in (value.real, value.imag)])
    assert_array_equal(vector, expected)


def test_last_subcarrier_wraps_to_the_first(grids):
    Y, X_hat, H_hat = grids
    vector = assemble_predn_input(Y, X_hat, H_hat, 63, 0, 2, 64)
    # right neighbours of k=63 are subcarriers 0 and 1
    assert vector[6] == Y[0, 0].real and vector[8] == Y[1, 0].real


def test_subcarrier_outside_the_grid_is_rejected(grids):
    with pytest.raises(IndexError):
        assemble_predn_input(*grids, 64, 0, 1, 64)


def test_grid_features_match_per_position_assembly(grids):
    Y, X_hat, H_hat = grids
    features = assemble_grid_features(Y, X_hat, H_hat, 2, dtype=np.float64)
    assert features.shape == (64, 4, 22)
    for k, t in [(0, 0), (17, 2), (63, 3)]:
        assert_array_equal(features[k, t], assemble_predn_input(Y, X_hat, H_hat, k, t, 2, 64))


# ------------------------------
# 2. Refinement networks
# ------------------------------
def test_zero_predn_outputs_zero(grids):
    config = PreDnnConfig(n_ici=2)
    assert_array_equal(predn_refine(*grids, build_predn(config), config), 0)


def test_predn_is_cyclically_equivariant(grids):
    config = PreDnnConfig(n_ici=2)
    model = build_predn(config)
    init_params(model, 4, dtype=np.float64)
    shift = 5
    rolled = [np.roll(g, shift, axis=0) for g in grids]
    assert_allclose(predn_refine(*rolled, model, config), np.roll(predn_refine(*grids, model, config), shift, axis=0))


def test_predn_rejects_a_mismatched_network(grids):
    with pytest.raises(ShapeError, match="N_ICI=1"):
        predn_refine(*grids, build_predn(PreDnnConfig(n_ici=2)), PreDnnConfig(n_ici=1))


def test_zero_casresnet_is_the_identity():
    H_tilde = _complex(np.random.default_rng(1), (3, 12, 7)).astype(np.complex64)
    assert_array_equal(casresnet_refine(H_tilde, build_casresnet()), H_tilde)


def test_casresnet_keeps_the_grid_shape():
    model = build_casresnet()
    init_params(model, 2)
    out = casresnet_refine(_complex(np.random.default_rng(2), (5, 5)), model)
    assert out.shape == (5, 5)


def test_casresnet_skip_wiring():
    config = CasResNetConfig()
    model = build_casresnet(config)
    inner, outer = model.layers[config.inner_skip[1] - 1], model.layers[config.outer_skip[1] - 1]
    assert (inner.name, inner.skip_from) == ("inner_skip", 1)
    assert (outer.name, outer.skip_from) == ("outer_skip", 0)
    assert [layer.kind for layer in model.layers].count("ReLU") == 2


# ------------------------------
# 3. Complexity
# ------------------------------
def test_casresnet_counts():
    model = build_casresnet()
    assert count_params(model) == 2562
    assert count_macs(model, (128, 14, 2)) == 4_530_176


def test_predn_counts():
    model = build_predn(PreDnnConfig(n_ici=2))
    assert count_params(model) == 802
    assert count_macs(model, (128, 14, 22)) == 1_376_256


def test_icinet_counts():
    assert ICINet.create(PreDnnConfig(n_ici=2)).complexity(128, 14) == (5_906_432, 3364)
    assert ICINet.create(None).complexity(128, 14) == (4_530_176, 2562)


# ------------------------------
# 4. Composition
# ------------------------------
def test_composition_matches_the_two_stages(grids):
    model = ICINet.create(PreDnnConfig(n_ici=2), seed=3)
    H_tilde = predn_refine(*grids, model.predn, model.predn_config)
    composed = icinet_forward(*grids, model.predn, model.casresnet, model.predn_config)
    assert_array_equal(composed, casresnet_refine(H_tilde, model.casresnet))
    assert_array_equal(model.refine(*grids), composed)


def test_zero_casresnet_passes_the_predn_output_through(grids):
    config = PreDnnConfig(n_ici=1)
    predn = build_predn(config)
    init_params(predn, 5)
    H_tilde = predn_refine(*grids, predn, config)
    assert_array_equal(icinet_forward(*grids, predn, build_casresnet(), config), H_tilde)
    assert_array_equal(icinet_forward(*grids, build_predn(config), build_casresnet(), config), 0)


def test_forward_is_deterministic_per_seed(grids):
    a = ICINet.create(PreDnnConfig(), seed=21).refine(*grids)
    b = ICINet.create(PreDnnConfig(), seed=21).refine(*grids)
    c = ICINet.create(PreDnnConfig(), seed=22).refine(*grids)
    assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_bare_predn_matches_the_one_inside_icinet():
    config = PreDnnConfig(n_ici=3)
    bare = create_predn(config, seed=4)
    inside = ICINet.create(config, seed=4).predn
    for mine, theirs in zip(bare.parameters().tensors.values(), inside.parameters().tensors.values()):
        assert_array_equal(mine.data, theirs.data)


def test_end_to_end_gradients_on_a_toy_grid():
    rng = np.random.default_rng(7)
    model = ICINet.create(PreDnnConfig(n_ici=1), seed=8, dtype=np.float64)
    Y, X_hat, H_hat = (_complex(rng, (2, 4, 4)) for _ in range(3))
    features = model.features(Y, X_hat, H_hat)
    target = rng.standard_normal((2, 4, 4, 2))
    errors = gradient_check(model, features, target)
    assert "predn.dense1.weight" in errors and "casresnet.conv5.weight" in errors
    assert max(errors.values()) < 1e-4


# ------------------------------
# 5. Checkpoints
# ------------------------------
def test_checkpoint_round_trip(tmp_path, grids):
    model = ICINet.create(PreDnnConfig(n_ici=3), seed=4)
    path = str(tmp_path / "icinet.iciw")
    save_icinet(path, model)
    loaded = load_icinet(path, expected=ICINet.create(PreDnnConfig(n_ici=3)))
    assert loaded.predn_config.n_ici == 3
    assert_array_equal(loaded.refine(*grids), model.refine(*grids))


def test_checkpoint_for_another_n_ici_is_refused(tmp_path):
    path = str(tmp_path / "icinet.iciw")
    save_icinet(path, ICINet.create(PreDnnConfig(n_ici=1)))
    with pytest.raises(ShapeError, match="N_ICI=1"):
        load_icinet(path, expected=ICINet.create(PreDnnConfig(n_ici=2)))


def test_casresnet_only_checkpoint(tmp_path):
    path = str(tmp_path / "casres.iciw")
    save_icinet(path, ICINet.create(None, seed=2))
    loaded = load_icinet(path)
    assert loaded.predn is None and loaded.architecture == "casresnet"


# ------------------------------
# 6. Training
# ------------------------------
def test_training_presets():
    assert TrainingConfig.full().updates_per_epoch(10000) == 50
    assert TrainingConfig.desk().epochs == 20
    assert TrainingConfig.full().epochs == 100
    with pytest.raises(ValueError):
        TrainingConfig(batch_size=0)


def test_training_set_requires_matching_shapes():
    with pytest.raises(ShapeError):
        TrainingSet(*(np.zeros((2, 4, 4)) for _ in range(3)), np.zeros((2, 4, 5)))


def test_predn_learns_a_static_channel():
    train_set, val_set = _static_training_set(64, 1), _static_training_set(32, 2)
    model = ICINet.create(PreDnnConfig(n_ici=1), seed=3)
    config = TrainingConfig(epochs=5, batch_size=16, learning_rate=5e-3, seed=3)
    trace = train_predn(model, train_set, val_set, config, verbose=False)
    assert trace.updates_per_epoch == 4
    assert np.all(np.diff(trace.train) < 0)
    assert trace.final_validation < trace.initial_validation


def test_zero_learning_rate_keeps_parameters():
    train_set, val_set = _static_training_set(20, 4), _static_training_set(10, 5)
    model = ICINet.create(PreDnnConfig(n_ici=1), seed=6)
    before = model.parameters().snapshot()
    config = TrainingConfig(epochs=2, batch_size=8, learning_rate=0.0, seed=1)
    train_end_to_end(train_set, val_set, config, verbose=False, model=model)
    for name, tensor in model.parameters().items():
        assert_array_equal(tensor.data, before[name])


def test_end_to_end_training_is_reproducible():
    train_set, val_set = _static_training_set(24, 7), _static_training_set(8, 8)
    config = TrainingConfig(epochs=1, batch_size=8, learning_rate=1e-3, seed=9)
    first = train_end_to_end(train_set, val_set, config, PreDnnConfig(n_ici=1), verbose=False)
    second = train_end_to_end(train_set, val_set, config, PreDnnConfig(n_ici=1), verbose=False)
    assert first.traces["e2e"].train == second.traces["e2e"].train
    assert first.traces["e2e"].validation == second.traces["e2e"].validation


def test_sequential_training_records_both_phases(tmp_path):
    train_set, val_set = _static_training_set(16, 9), _static_training_set(8, 10)
    config = TrainingConfig(epochs=2, batch_size=8, seed=2)
    result = train_sequential(train_set, val_set, config, PreDnnConfig(n_ici=1), verbose=False)
    assert set(result.traces) == {"predn", "casresnet"}
    assert all(len(trace.validation) == 2 for trace in result.traces.values())

    path = tmp_path / "traces.json"
    result.save_traces(str(path))
    assert '"strategy": "sequential"' in path.read_text()


def test_casresnet_only_training():
    train_set, val_set = _static_training_set(16, 11), _static_training_set(8, 12)
    result = train_casresnet_only(train_set, val_set, TrainingConfig(epochs=1, batch_size=8), verbose=False)
    assert result.model.predn is None
    assert len(result.traces["casres_only"].train) == 1


def test_non_finite_loss_reports_epoch_and_batch():
    train_set, val_set = _static_training_set(16, 13), _static_training_set(8, 14)
    broken = replace(train_set, H_true=np.full_like(train_set.H_true, np.nan))
    model = ICINet.create(PreDnnConfig(n_ici=1), seed=1)
    with pytest.raises(NumericalError, match="epoch 1, batch 1"):
        train_predn(model, broken, val_set, TrainingConfig(epochs=1, batch_size=8), verbose=False)
