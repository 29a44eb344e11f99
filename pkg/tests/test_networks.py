"""Branch/trunk network construction, forward variants, and checkpoints."""

import json

import numpy as np
import pytest

from opbasis import diffkit as dk
from opbasis.errors import (
    CheckpointCorruptError,
    CheckpointSpecMismatchError,
    CheckpointVersionError,
    ConfigError,
)
from opbasis.networks import (
    CHECKPOINT_FORMAT_VERSION,
    DeepOnetModel,
    MlpSpec,
    deeponet_eval,
    init_model,
    load_checkpoint,
    mlp_forward,
    mlp_layout,
    param_count,
    save_checkpoint,
)

rng = np.random.default_rng(42)


def small_model(seed=0, variant="plain"):
    branch = MlpSpec(8, (10, 10), 6, variant=variant)
    trunk = MlpSpec(2, (10, 10), 6, variant=variant)
    return init_model(branch, trunk, seed=seed)


class TestParamCount:
    # (trunk spec, branch spec) triples used in the reference experiments:
    # latent width w equals the trunk/branch output width.
    CONFIGS = {
        "advection_diffusion": (MlpSpec(2, (128,) * 4, 128), MlpSpec(128, (128,) * 3, 128)),
        "burgers": (MlpSpec(2, (100,) * 7, 100), MlpSpec(101, (100,) * 7, 100)),
        "kdv": (MlpSpec(2, (128,) * 6, 128), MlpSpec(128, (128,) * 5, 128)),
    }

    @pytest.mark.parametrize("name", sorted(CONFIGS))
    def test_formula_matches_enumeration(self, name):
        for spec in self.CONFIGS[name]:
            widths = (spec.in_width, *spec.hidden, spec.out_width)
            by_hand = sum(
                widths[i] * widths[i + 1] + widths[i + 1] for i in range(len(widths) - 1)
            )
            assert param_count(spec) == by_hand
            layout = mlp_layout(spec)
            assert layout.size == by_hand

    @pytest.mark.parametrize("name", sorted(CONFIGS))
    def test_modified_adds_two_encoders(self, name):
        trunk, _ = self.CONFIGS[name]
        mod = MlpSpec(trunk.in_width, trunk.hidden, trunk.out_width, variant="modified")
        extra = 2 * (trunk.in_width * trunk.hidden[0] + trunk.hidden[0])
        assert param_count(mod) == param_count(trunk) + extra
        assert mlp_layout(mod).size == param_count(mod)


class TestInit:
    def test_same_seed_bitwise_identical(self):
        a = small_model(seed=3)
        b = small_model(seed=3)
        np.testing.assert_array_equal(a.params.data, b.params.data)

    def test_different_seeds_differ(self):
        a = small_model(seed=3)
        b = small_model(seed=4)
        assert not np.array_equal(a.params.data, b.params.data)

    def test_biases_zero_weights_bounded(self):
        m = small_model(seed=1)
        for name in m.params.layout.names:
            v = m.params.view(name)
            if v.ndim == 1:
                np.testing.assert_array_equal(v, 0.0)
            else:
                limit = np.sqrt(6.0 / (v.shape[0] + v.shape[1]))
                assert np.all(np.abs(v) <= limit)

    def test_no_hidden_layer_rejected(self):
        with pytest.raises(ConfigError):
            init_model(MlpSpec(4, (), 3), MlpSpec(2, (8,), 3), seed=0)

    def test_modified_requires_uniform_width(self):
        with pytest.raises(ConfigError):
            MlpSpec(4, (8, 9), 3, variant="modified").validate()


class TestForward:
    def test_zero_parameters_give_zero_output(self):
        m = small_model(seed=2)
        m.params.data[:] = 0.0
        x = rng.normal(size=(7, 2))
        np.testing.assert_array_equal(m.trunk_forward(x), np.zeros((7, 6)))

    def test_single_linear_layer_identity(self):
        spec = MlpSpec(5, (), 5)  # permissive for forward-only use
        weights = {"W0": np.eye(5), "b0": np.zeros(5)}
        x = rng.normal(size=(4, 5))
        np.testing.assert_array_equal(mlp_forward(spec, weights, x), x)

    def test_modified_collapses_when_encoders_equal(self):
        """With equal encoders the gates drop out of the forward pass."""
        m = small_model(seed=5, variant="modified")
        for half in ("branch", "trunk"):
            m.params.view(f"{half}.Wv")[...] = m.params.view(f"{half}.Wu")
            m.params.view(f"{half}.bv")[...] = m.params.view(f"{half}.bu")
        weights = m.params.unflatten()
        y = rng.normal(size=(9, 2))
        got = m.trunk_forward(y, weights)
        u = np.tanh(y @ weights["trunk.Wu"] + weights["trunk.bu"])
        want = u @ weights["trunk.W2"] + weights["trunk.b2"]
        np.testing.assert_allclose(got, want, rtol=0, atol=0)

    def test_taylor_order_zero_equals_plain(self):
        m = small_model(seed=6, variant="modified")
        y = rng.normal(size=(5, 2))
        plain = m.trunk_forward(y)
        jet = dk.taylor_eval(lambda a: m.trunk_forward(a), [y], [np.zeros_like(y)], order=0)
        np.testing.assert_array_equal(dk.value_of(jet.coeffs[0]), plain)


class TestDeepOnetEval:
    def test_constant_halves_merge_to_product(self):
        """Constant branch 2 and trunk 3 at latent width 1 give 6."""
        branch = MlpSpec(4, (5,), 1)
        trunk = MlpSpec(2, (5,), 1)
        m = init_model(branch, trunk, seed=0)
        m.params.data[:] = 0.0
        m.params.view("branch.b1")[...] = 2.0
        m.params.view("trunk.b1")[...] = 3.0
        out = deeponet_eval(m, np.zeros(4), rng.normal(size=(6, 2)))
        np.testing.assert_allclose(out, np.full(6, 6.0), rtol=0, atol=0)

    def test_zero_trunk_gives_zero(self):
        m = small_model(seed=7)
        for name in m.params.layout.names:
            if name.startswith("trunk."):
                m.params.view(name)[...] = 0.0
        out = deeponet_eval(m, rng.normal(size=8), rng.normal(size=(5, 2)))
        np.testing.assert_array_equal(out, np.zeros(5))

    def test_matches_separately_computed_dot(self):
        m = small_model(seed=8)
        u = rng.normal(size=8)
        y = rng.normal(size=(11, 2))
        got = deeponet_eval(m, u, y)
        b = m.branch_forward(u[None, :])[0]
        t = m.trunk_forward(y)
        np.testing.assert_array_equal(got, t @ b)

    def test_merge_linear_in_each_half(self):
        b = rng.normal(size=(6, 4))
        t1 = rng.normal(size=(6, 4))
        t2 = rng.normal(size=(6, 4))
        lhs = dk.dot(b, t1 + t2)
        np.testing.assert_allclose(lhs, dk.dot(b, t1) + dk.dot(b, t2), rtol=1e-15)

    def test_per_point_sensor_rows(self):
        m = small_model(seed=9)
        U = rng.normal(size=(5, 8))
        y = rng.normal(size=(5, 2))
        got = deeponet_eval(m, U, y)
        want = np.array([deeponet_eval(m, U[i], y[i : i + 1])[0] for i in range(5)])
        np.testing.assert_allclose(got, want, rtol=1e-12)

    def test_latent_width_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            DeepOnetModel(
                MlpSpec(4, (5,), 3),
                MlpSpec(2, (5,), 2),
                init_model(MlpSpec(4, (5,), 3), MlpSpec(2, (5,), 3), 0).params,
            )


class TestCheckpoints:
    def test_roundtrip_bitwise(self, tmp_path):
        m = small_model(seed=11, variant="modified")
        m.step = 1234
        m.pde_tag = "advection_diffusion:alpha=4:nu=0.01"
        p = tmp_path / "ckpt.json"
        save_checkpoint(m, p)
        back = load_checkpoint(p)
        np.testing.assert_array_equal(back.params.data, m.params.data)
        assert back.branch == m.branch
        assert back.trunk == m.trunk
        assert back.step == 1234
        assert back.seed == 11
        assert back.pde_tag == m.pde_tag

    def test_corrupted_payload_rejected(self, tmp_path):
        m = small_model(seed=12)
        p = tmp_path / "ckpt.json"
        save_checkpoint(m, p)
        doc = json.loads(p.read_text())
        payload = doc["params_b64"]
        doc["params_b64"] = payload[: len(payload) // 2]
        p.write_text(json.dumps(doc))
        with pytest.raises(CheckpointCorruptError):
            load_checkpoint(p)

    def test_truncated_file_rejected(self, tmp_path):
        m = small_model(seed=13)
        p = tmp_path / "ckpt.json"
        save_checkpoint(m, p)
        p.write_text(p.read_text()[:200])
        with pytest.raises(CheckpointCorruptError):
            load_checkpoint(p)

    def test_version_mismatch_rejected(self, tmp_path):
        m = small_model(seed=14)
        p = tmp_path / "ckpt.json"
        save_checkpoint(m, p)
        doc = json.loads(p.read_text())
        doc["format_version"] = CHECKPOINT_FORMAT_VERSION + 1
        p.write_text(json.dumps(doc))
        with pytest.raises(CheckpointVersionError):
            load_checkpoint(p)

    def test_architecture_mismatch_rejected(self, tmp_path):
        m = small_model(seed=15)
        p = tmp_path / "ckpt.json"
        save_checkpoint(m, p)
        deeper = MlpSpec(2, (10, 10, 10), 6)
        with pytest.raises(CheckpointSpecMismatchError):
            load_checkpoint(p, expect_trunk=deeper)
