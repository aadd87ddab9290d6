import numpy as np
import pytest

from skyjo_zero import encoding, nets
from skyjo_zero.autodiff import Tensor, gradient_check, softmax, softmax_xent, tsum
from skyjo_zero.engine import new_game
from skyjo_zero.nets import (
    MuZeroNet,
    NetConfig,
    NetsError,
    scalar_to_support,
    support_to_scalar,
)


def tiny_config(**overrides):
    base = dict(
        layers=1, heads=2, d_model=8, ff_hidden=16, latent_dim=8,
        head_hidden=8, max_players=4,
    )
    base.update(overrides)
    return NetConfig(**base)


def observe(seed=0, players=2, ego=0):
    return encoding.encode_observation(new_game(players, seed), ego)


class TestSupport:
    def test_integer_is_one_hot(self):
        dist = scalar_to_support(7.0)[0]
        assert dist[200 + 7] == pytest.approx(1.0)
        assert dist.sum() == pytest.approx(1.0)

    def test_two_hot_split(self):
        dist = scalar_to_support(9.25)[0]
        assert dist[200 + 9] == pytest.approx(0.75)
        assert dist[200 + 10] == pytest.approx(0.25)

    def test_round_trip(self):
        xs = np.array([-200.0, -37.6, 0.0, 9.94009, 123.456, 200.0])
        back = support_to_scalar(scalar_to_support(xs))
        assert np.allclose(back, xs, atol=1e-4)

    def test_clamps_out_of_range(self):
        dist = scalar_to_support(np.array([-500.0, 500.0]))
        assert dist[0, 0] == pytest.approx(1.0)
        assert dist[1, -1] == pytest.approx(1.0)

    def test_shapes(self):
        assert scalar_to_support(np.zeros((3, 4))).shape == (3, 4, 401)
        assert support_to_scalar(np.full((2, 401), 1 / 401)).shape == (2,)


class TestConfig:
    def test_paper_scale_defaults(self):
        cfg = NetConfig()
        assert (cfg.layers, cfg.heads, cfg.d_model) == (6, 8, 256)
        assert (cfg.ff_hidden, cfg.latent_dim) == (1024, 512)
        assert cfg.support_size == 401

    def test_head_divisibility_enforced(self):
        with pytest.raises(NetsError):
            NetConfig(d_model=10, heads=4)

    def test_max_seq_len_covers_eight_players(self):
        cfg = NetConfig()
        assert cfg.max_seq_len == 1 + encoding.sequence_length(8)


@pytest.fixture(scope="module")
def net():
    return MuZeroNet(tiny_config(), seed=0)


class TestShapes:

    def test_represent(self, net):
        h = net.represent([observe(0), observe(1)])
        assert h.shape == (2, 8)
        assert np.all(np.abs(h.data) <= 1.0)  # Tanh-bounded latent

    def test_represent_three_players(self, net):
        h = net.represent([observe(0, players=3, ego=2)])
        assert h.shape == (1, 8)

    def test_mixed_player_counts_rejected(self, net):
        with pytest.raises(NetsError):
            net.represent([observe(0, players=2), observe(0, players=3)])

    def test_dynamics(self, net):
        h = net.represent([observe(0), observe(1)])
        nxt, reward = net.dynamics(h, np.array([0, 15]))
        assert nxt.shape == (2, 8)
        assert reward.shape == (2, 401)

    def test_dynamics_rejects_bad_action(self, net):
        h = net.represent([observe(0)])
        with pytest.raises(NetsError):
            net.dynamics(h, np.array([16]))

    def test_predict(self, net):
        h = net.represent([observe(0)])
        hc = net.ego_condition(h, [0], [0], [2])
        policy, value = net.predict(hc)
        assert policy.shape == (1, 16)
        assert value.shape == (1, 401)
        assert np.isfinite(policy.data).all()

    def test_winner_and_rank_slices(self, net):
        h = net.represent([observe(0, players=3)])
        hc = net.ego_condition(h, [0], [1], [3])
        assert net.winner_logits(hc, 3).shape == (1, 3)
        rank = net.rank_logits(hc, 3)
        assert rank.shape == (1, 3, 3)
        probs = softmax(rank).data
        assert np.allclose(probs.sum(axis=-1), 1.0, atol=1e-6)

    def test_ego_index_range_checked(self, net):
        h = net.represent([observe(0)])
        with pytest.raises(NetsError):
            net.ego_condition(h, [4], [0], [2])  # max_players is 4


class TestEgoConditioning:
    def test_zero_embeddings_reduce_to_layernorm(self):
        net = MuZeroNet(tiny_config(), seed=1)
        for table in (net.ego.e_ego, net.ego.e_current, net.ego.e_nplayers):
            table.table.data[:] = 0.0
        h = net.represent([observe(0)])
        conditioned = net.ego.__call__(h, [1], [0], [2], ablated=False)
        plain = net.ego.ln(h)
        assert np.allclose(conditioned.data, plain.data, atol=1e-6)

    def test_ablation_bypasses_embeddings(self):
        net = MuZeroNet(tiny_config(), seed=2)
        h = net.represent([observe(0)])
        net.set_ablation("ego_off")
        off = net.ego_condition(h, [1], [0], [2])
        assert np.allclose(off.data, net.ego.ln(h).data, atol=1e-6)
        # the conditioned output must differ once embeddings are active
        net.set_ablation("full")
        on = net.ego_condition(h, [1], [0], [2])
        assert not np.allclose(on.data, off.data, atol=1e-4)

    def test_ablation_does_not_touch_weights(self):
        net = MuZeroNet(tiny_config(), seed=3)
        before = net.param_hash()
        net.set_ablation("ego_off")
        assert net.param_hash() == before

    def test_unknown_mode_rejected(self):
        with pytest.raises(NetsError):
            MuZeroNet(tiny_config()).set_ablation("mystery")

    def test_ego_seat_changes_output(self):
        net = MuZeroNet(tiny_config(), seed=4)
        h = net.represent([observe(0)])
        a = net.ego_condition(h, [0], [0], [2])
        b = net.ego_condition(h, [1], [0], [2])
        assert not np.allclose(a.data, b.data, atol=1e-4)


class TestDynamicsResidual:
    def test_zeroed_final_layer_is_layernorm_identity(self):
        net = MuZeroNet(tiny_config(), seed=5)
        net.dynamics_net.out.w.data[:] = 0.0
        net.dynamics_net.out.b.data[:] = 0.0
        h = net.represent([observe(0)])
        nxt, _ = net.dynamics(h, np.array([3]))
        assert np.allclose(nxt.data, net.dynamics_net.ln(h).data, atol=1e-6)


class TestGradientFlow:
    def test_full_chain_finite_difference(self):
        net = MuZeroNet(tiny_config(support_max=5), seed=6)
        obs = [observe(0)]
        value_target = scalar_to_support(np.array([2.5]), support_max=5)
        policy_target = np.full((1, 16), 1 / 16, dtype=np.float32)

        def loss_fn():
            h = net.represent(obs)
            h1, reward = net.dynamics(h, np.array([1]))
            hc = net.ego_condition(h1, [0], [1], [2])
            policy, value = net.predict(hc)
            loss = softmax_xent(policy, policy_target)
            loss = loss + softmax_xent(value, value_target)
            loss = loss + softmax_xent(reward, value_target)
            loss = loss + softmax_xent(
                net.winner_logits(hc, 2), np.array([[1.0, 0.0]], dtype=np.float32)
            )
            return loss

        probe = [
            net.representation.blocks[0].wq,
            net.representation.proj.w,
            net.representation.embedder.card_value.table,
            net.representation.embedder.cls,
            net.dynamics_net.action_emb.table,
            net.dynamics_net.fc1.w,
            net.ego.e_ego.table,
            net.policy_head.out.w,
            net.value_head.fc1.b,
            net.winner_mlp.out.b,
        ]
        # h = 1e-4: the CLS slot sits in a high-curvature region and pure
        # truncation error at h = 1e-3 exceeds the tolerance (scales as h^2).
        report = gradient_check(loss_fn, probe, h=1e-4, max_entries=6)
        assert report["passed"], report
        assert report["max_error"] < 1e-3

    def test_backward_populates_all_used_params(self):
        net = MuZeroNet(tiny_config(), seed=7)
        h = net.represent([observe(0)])
        hc = net.ego_condition(h, [0], [0], [2])
        policy, _ = net.predict(hc)
        tsum(policy).backward()
        assert net.policy_head.fc1.w.grad is not None
        assert net.representation.proj.w.grad is not None
        # value head untouched by this loss
        assert net.value_head.fc1.w.grad is None


class TestCheckpoint:
    def test_round_trip_outputs_identical(self, tmp_path):
        net = MuZeroNet(tiny_config(), seed=8)
        net.save(tmp_path / "ckpt")
        loaded = MuZeroNet.load(tmp_path / "ckpt")
        assert loaded.param_hash() == net.param_hash()
        obs = [observe(3)]
        a = net.represent(obs)
        b = loaded.represent(obs)
        assert np.allclose(a.data, b.data, atol=1e-4)
        pa, va = net.predict(net.ego_condition(a, [0], [0], [2]))
        pb, vb = loaded.predict(loaded.ego_condition(b, [0], [0], [2]))
        assert np.allclose(pa.data, pb.data, atol=1e-4)
        assert np.allclose(va.data, vb.data, atol=1e-4)

    def test_ablation_mode_persisted(self, tmp_path):
        net = MuZeroNet(tiny_config(), seed=9)
        net.set_ablation("ego_off")
        net.save(tmp_path / "ckpt")
        assert MuZeroNet.load(tmp_path / "ckpt").ablation == "ego_off"

    def test_schema_mismatch_refused(self, tmp_path):
        net = MuZeroNet(tiny_config(), seed=10)
        net.save(tmp_path / "ckpt")
        manifest = (tmp_path / "ckpt" / "manifest.json").read_text()
        (tmp_path / "ckpt" / "manifest.json").write_text(
            manifest.replace("obs-v1", "obs-v9")
        )
        with pytest.raises(NetsError):
            MuZeroNet.load(tmp_path / "ckpt")

    def test_checkpoint_hash_stable(self, tmp_path):
        net = MuZeroNet(tiny_config(), seed=11)
        net.save(tmp_path / "a")
        net.save(tmp_path / "b")
        assert nets.checkpoint_hash(tmp_path / "a") == nets.checkpoint_hash(
            tmp_path / "b"
        )


class TestDeterminism:
    def test_same_seed_same_weights(self):
        assert (
            MuZeroNet(tiny_config(), seed=0).param_hash()
            == MuZeroNet(tiny_config(), seed=0).param_hash()
        )

    def test_forward_is_pure(self):
        net = MuZeroNet(tiny_config(), seed=12)
        obs = [observe(5)]
        a = net.represent(obs).data.copy()
        b = net.represent(obs).data.copy()
        assert np.array_equal(a, b)
