"""Planning networks: representation, dynamics, prediction, ego conditioning
and the winner/rank auxiliary heads, plus the categorical scalar support.

The representation network is a pre-norm transformer encoder over the token
sequence with a learnable CLS slot; its CLS output is projected through
layer norm, a linear layer and Tanh into a bounded latent vector. Dynamics
advances the latent by an action embedding through a residual MLP. All
prediction heads are 2-hidden-layer GELU MLPs.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import encoding
from .autodiff import (
    Dense,
    Embedding,
    LayerNorm,
    Module,
    Parameter,
    Tensor,
    add,
    concat,
    gelu,
    index,
    multi_head_attention,
    reshape,
    tanh,
)
from .encoding import GRID_SIZE, HISTORY_WINDOW, TokenSequence

CHECKPOINT_VERSION = 1


class NetsError(Exception):
    pass


@dataclass(frozen=True)
class NetConfig:
    layers: int = 6
    heads: int = 8
    d_model: int = 256
    ff_hidden: int = 1024
    latent_dim: int = 512
    head_hidden: int = 256
    action_count: int = 16
    support_max: int = 200
    max_players: int = 8
    winner_value_weight: float = 0.0  # optional winner-head blend in search
    schema_version: str = encoding.SCHEMA_VERSION

    def __post_init__(self):
        if self.latent_dim <= 0:
            raise NetsError("latent_dim must be positive")
        if self.d_model % self.heads:
            raise NetsError("d_model must be divisible by heads")

    @property
    def support_size(self) -> int:
        return 2 * self.support_max + 1

    @property
    def max_seq_len(self) -> int:
        # CLS + board tokens for max players + discard + global + history + decision
        return 1 + encoding.sequence_length(self.max_players)

    @classmethod
    def toy(cls, **overrides) -> "NetConfig":
        """Desk-scale config for tests: same architecture, reduced widths."""
        base = dict(
            layers=2, heads=4, d_model=32, ff_hidden=64, latent_dim=64,
            head_hidden=64,
        )
        base.update(overrides)
        return cls(**base)


def scalar_to_support(x, support_max: int = 200) -> np.ndarray:
    """Two-hot projection of scalars onto integer atoms -max..max.

    Values outside the support are clamped to the boundary atom.
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    x = np.clip(x, -support_max, support_max)
    size = 2 * support_max + 1
    out = np.zeros(x.shape + (size,), dtype=np.float32)
    low = np.floor(x).astype(np.int64)
    frac = (x - low).astype(np.float32)
    low_idx = low + support_max
    high_idx = np.minimum(low_idx + 1, size - 1)
    flat = out.reshape(-1, size)
    rows = np.arange(flat.shape[0])
    flat[rows, low_idx.reshape(-1)] = 1.0 - frac.reshape(-1)
    flat[rows, high_idx.reshape(-1)] += frac.reshape(-1)
    return out


def support_to_scalar(dist: np.ndarray, support_max: int = 200) -> np.ndarray:
    """Expectation decode of a categorical distribution over integer atoms."""
    atoms = np.arange(-support_max, support_max + 1, dtype=np.float64)
    return np.asarray(np.asarray(dist, dtype=np.float64) @ atoms)


class MLPHead(Module):
    """2-hidden-layer GELU MLP, the shared head architecture."""

    def __init__(self, fan_in, hidden, fan_out, rng, name):
        self.fc1 = Dense(fan_in, hidden, rng, f"{name}.fc1")
        self.fc2 = Dense(hidden, hidden, rng, f"{name}.fc2")
        self.out = Dense(hidden, fan_out, rng, f"{name}.out")

    def __call__(self, x: Tensor) -> Tensor:
        return self.out(gelu(self.fc2(gelu(self.fc1(x)))))


class TransformerLayer(Module):
    def __init__(self, cfg: NetConfig, rng, name):
        d = cfg.d_model
        scale = np.sqrt(1.0 / d)
        self.ln1 = LayerNorm(d, f"{name}.ln1")
        self.wq = Parameter(rng.normal(0, scale, (d, d)), f"{name}.wq")
        self.wk = Parameter(rng.normal(0, scale, (d, d)), f"{name}.wk")
        self.wv = Parameter(rng.normal(0, scale, (d, d)), f"{name}.wv")
        self.wo = Parameter(rng.normal(0, scale, (d, d)), f"{name}.wo")
        self.ln2 = LayerNorm(d, f"{name}.ln2")
        self.ff1 = Dense(d, cfg.ff_hidden, rng, f"{name}.ff1")
        self.ff2 = Dense(cfg.ff_hidden, d, rng, f"{name}.ff2")
        self.heads = cfg.heads

    def __call__(self, x: Tensor) -> Tensor:
        attn = multi_head_attention(
            self.ln1(x), self.wq, self.wk, self.wv, self.wo, self.heads
        )
        x = add(x, attn)
        return add(x, self.ff2(gelu(self.ff1(self.ln2(x)))))


class TokenEmbedder(Module):
    """Per-kind feature embeddings summed into d_model token vectors."""

    def __init__(self, cfg: NetConfig, rng):
        d = cfg.d_model
        vocab = encoding.vocabulary_sizes(cfg.max_players)

        def emb(key, name):
            return Embedding(vocab[key], d, rng, f"embed.{name}")

        self.owner = emb("owner", "owner")
        self.position = emb("position", "position")
        self.visible = emb("visible", "visible")
        self.card_value = emb("card_value", "card_value")
        self.removed = emb("removed", "removed")
        self.discard_value = emb("card_value", "discard_value")
        self.pile_size = emb("pile_size", "pile_size")
        self.deck_size = emb("deck_size", "deck_size")
        self.step_count = emb("step_count", "step_count")
        self.current_player = emb("current_player", "current_player")
        self.phase = emb("phase", "phase")
        self.round_bucket = emb("round_bucket", "round_bucket")
        self.round_index = emb("round_index", "round_index")
        self.hist_actor = emb("history_actor", "hist_actor")
        self.hist_type = emb("history_action_type", "hist_type")
        self.hist_source = emb("history_source", "hist_source")
        self.hist_target = emb("history_target", "hist_target")
        self.hist_value_a = emb("history_value", "hist_value_a")
        self.hist_value_b = emb("history_value", "hist_value_b")
        self.decision_phase = emb("phase", "decision_phase")
        self.decision_drawn = emb("card_value", "decision_drawn")
        self.kind = Embedding(len(encoding.TokenKind), d, rng, "embed.kind")
        self.cls = Parameter(rng.normal(0, 0.02, (1, 1, d)), "embed.cls")
        self.positional = Embedding(cfg.max_seq_len, d, rng, "embed.positional")

    def __call__(self, feats: np.ndarray, num_players: int) -> Tensor:
        """feats: (B, T, 6) integer features in the fixed layout order."""
        batch = feats.shape[0]
        nb = GRID_SIZE * num_players
        board = feats[:, :nb]
        disc = feats[:, nb]
        glob = feats[:, nb + 1]
        hist = feats[:, nb + 2 : nb + 2 + HISTORY_WINDOW]
        decision = feats[:, nb + 2 + HISTORY_WINDOW]

        def ksum(parts, kind):
            total = parts[0]
            for p in parts[1:]:
                total = add(total, p)
            kind_idx = np.full(total.shape[:-1], int(kind), dtype=np.int64)
            return add(total, self.kind(kind_idx))

        board_e = ksum(
            [
                self.owner(board[..., 0]),
                self.position(board[..., 1]),
                self.visible(board[..., 2]),
                self.card_value(board[..., 3]),
                self.removed(board[..., 4]),
            ],
            encoding.TokenKind.BOARD,
        )
        disc_e = ksum(
            [self.discard_value(disc[:, None, 0]), self.pile_size(disc[:, None, 1])],
            encoding.TokenKind.DISCARD,
        )
        glob_e = ksum(
            [
                self.deck_size(glob[:, None, 0]),
                self.step_count(glob[:, None, 1]),
                self.current_player(glob[:, None, 2]),
                self.phase(glob[:, None, 3]),
                self.round_bucket(glob[:, None, 4]),
                self.round_index(glob[:, None, 5]),
            ],
            encoding.TokenKind.GLOBAL,
        )
        hist_e = ksum(
            [
                self.hist_actor(hist[..., 0]),
                self.hist_type(hist[..., 1]),
                self.hist_source(hist[..., 2]),
                self.hist_target(hist[..., 3]),
                self.hist_value_a(hist[..., 4]),
                self.hist_value_b(hist[..., 5]),
            ],
            encoding.TokenKind.HISTORY,
        )
        dec_e = ksum(
            [
                self.decision_phase(decision[:, None, 0]),
                self.decision_drawn(decision[:, None, 1]),
            ],
            encoding.TokenKind.DECISION,
        )
        # broadcast the learned CLS row across the batch
        cls = add(self.cls, Tensor(np.zeros((batch, 1, 1), dtype=np.float32)))
        x = concat([cls, board_e, disc_e, glob_e, hist_e, dec_e], axis=1)
        pos = self.positional(np.arange(x.shape[1], dtype=np.int64))
        return add(x, reshape(pos, (1,) + pos.shape))


class RepresentationNet(Module):
    def __init__(self, cfg: NetConfig, rng):
        self.embedder = TokenEmbedder(cfg, rng)
        self.blocks = [
            TransformerLayer(cfg, rng, f"rep.layer{i}") for i in range(cfg.layers)
        ]
        self.final_ln = LayerNorm(cfg.d_model, "rep.final_ln")
        self.proj = Dense(cfg.d_model, cfg.latent_dim, rng, "rep.proj")

    def __call__(self, feats: np.ndarray, num_players: int) -> Tensor:
        x = self.embedder(feats, num_players)
        for block in self.blocks:
            x = block(x)
        cls = index(x, (slice(None), 0))
        return tanh(self.proj(self.final_ln(cls)))


class DynamicsNet(Module):
    def __init__(self, cfg: NetConfig, rng):
        latent = cfg.latent_dim
        self.action_emb = Embedding(cfg.action_count, latent, rng, "dyn.action_emb")
        self.fc1 = Dense(2 * latent, latent, rng, "dyn.fc1")
        self.fc2 = Dense(latent, latent, rng, "dyn.fc2")
        self.out = Dense(latent, latent, rng, "dyn.out")
        self.ln = LayerNorm(latent, "dyn.ln")
        self.reward_head = MLPHead(
            latent, cfg.head_hidden, cfg.support_size, rng, "dyn.reward"
        )
        self.action_count = cfg.action_count

    def __call__(self, h: Tensor, actions: np.ndarray) -> tuple[Tensor, Tensor]:
        actions = np.asarray(actions, dtype=np.int64)
        if actions.size and (actions.min() < 0 or actions.max() >= self.action_count):
            raise NetsError(f"action index out of range: {actions}")
        a = self.action_emb(actions)
        z = concat([h, a], axis=-1)
        delta = self.out(gelu(self.fc2(gelu(self.fc1(z)))))
        nxt = self.ln(add(h, delta))
        return nxt, self.reward_head(nxt)


class EgoConditioner(Module):
    """h_cond = LayerNorm(h + e_ego + e_current + e_nplayers); the ego_off
    ablation bypasses all three embeddings, leaving LayerNorm(h)."""

    def __init__(self, cfg: NetConfig, rng):
        latent = cfg.latent_dim
        self.e_ego = Embedding(cfg.max_players, latent, rng, "ego.e_ego")
        self.e_current = Embedding(cfg.max_players, latent, rng, "ego.e_current")
        self.e_nplayers = Embedding(
            cfg.max_players + 1, latent, rng, "ego.e_nplayers"
        )
        self.ln = LayerNorm(latent, "ego.ln")
        self.max_players = cfg.max_players

    def __call__(
        self, h: Tensor, ego, current, n_players, ablated: bool = False
    ) -> Tensor:
        if ablated:
            return self.ln(h)
        ego = np.asarray(ego, dtype=np.int64)
        current = np.asarray(current, dtype=np.int64)
        n_players = np.asarray(n_players, dtype=np.int64)
        for arr, hi in ((ego, self.max_players), (current, self.max_players), (n_players, self.max_players + 1)):
            if arr.size and (arr.min() < 0 or arr.max() >= hi):
                raise NetsError(f"ego-conditioning index out of range: {arr}")
        z = add(h, self.e_ego(ego))
        z = add(z, self.e_current(current))
        z = add(z, self.e_nplayers(n_players))
        return self.ln(z)


ABLATION_MODES = ("full", "ego_off")


class MuZeroNet(Module):
    def __init__(self, cfg: NetConfig, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.representation = RepresentationNet(cfg, rng)
        self.dynamics_net = DynamicsNet(cfg, rng)
        self.ego = EgoConditioner(cfg, rng)
        self.policy_head = MLPHead(
            cfg.latent_dim, cfg.head_hidden, cfg.action_count, rng, "pred.policy"
        )
        self.value_head = MLPHead(
            cfg.latent_dim, cfg.head_hidden, cfg.support_size, rng, "pred.value"
        )
        self.winner_mlp = MLPHead(
            cfg.latent_dim, cfg.head_hidden, cfg.max_players, rng, "belief.winner"
        )
        self.rank_mlp = MLPHead(
            cfg.latent_dim,
            cfg.head_hidden,
            cfg.max_players * cfg.max_players,
            rng,
            "belief.rank",
        )
        self.ablation = "full"

    # -- inference pieces ---------------------------------------------------

    def represent(self, observations: list[TokenSequence]) -> Tensor:
        n = observations[0].num_players
        length = encoding.sequence_length(n)
        feats = np.zeros((len(observations), length, encoding.N_FEATURES), np.int64)
        for i, obs in enumerate(observations):
            if obs.num_players != n:
                raise NetsError("mixed player counts in one batch")
            _, f = obs.feature_matrix()
            feats[i] = f
        return self.representation(feats, n)

    def dynamics(self, h: Tensor, actions) -> tuple[Tensor, Tensor]:
        return self.dynamics_net(h, actions)

    def latent_tensor(self, latent: np.ndarray) -> Tensor:
        """Wrap a stored (latent_dim,) vector back into a batch-of-1 Tensor."""
        return Tensor(np.asarray(latent, dtype=np.float32).reshape(1, -1))

    def ego_condition(self, h: Tensor, ego, current, n_players) -> Tensor:
        return self.ego(h, ego, current, n_players, ablated=self.ablation == "ego_off")

    def predict(self, h_cond: Tensor) -> tuple[Tensor, Tensor]:
        return self.policy_head(h_cond), self.value_head(h_cond)

    def winner_logits(self, h_cond: Tensor, n_players: int) -> Tensor:
        return index(self.winner_mlp(h_cond), (slice(None), slice(0, n_players)))

    def rank_logits(self, h_cond: Tensor, n_players: int) -> Tensor:
        m = self.cfg.max_players
        full = reshape(self.rank_mlp(h_cond), (h_cond.shape[0], m, m))
        return index(full, (slice(None), slice(0, n_players), slice(0, n_players)))

    def set_ablation(self, mode: str) -> None:
        if mode not in ABLATION_MODES:
            raise NetsError(f"unknown ablation mode: {mode!r}")
        self.ablation = mode

    # -- checkpointing ------------------------------------------------------

    def save(self, directory: str | Path) -> None:
        named = {p.name: p.data for p in self.parameters()}
        metadata = {
            "checkpoint_version": CHECKPOINT_VERSION,
            "config": dataclasses.asdict(self.cfg),
            "schema_version": self.cfg.schema_version,
            "ablation": self.ablation,
        }
        ad.save_param_store(directory, named, metadata)

    @classmethod
    def load(cls, directory: str | Path) -> "MuZeroNet":
        named, metadata = ad.load_param_store(directory)
        if metadata.get("schema_version") != encoding.SCHEMA_VERSION:
            raise NetsError(
                f"checkpoint schema {metadata.get('schema_version')!r} does not "
                f"match encoder schema {encoding.SCHEMA_VERSION!r}"
            )
        cfg = NetConfig(**metadata["config"])
        net = cls(cfg)
        params = {p.name: p for p in net.parameters()}
        if set(params) != set(named):
            raise NetsError("checkpoint parameter names do not match the model")
        for name, arr in named.items():
            if params[name].data.shape != arr.shape:
                raise NetsError(f"shape mismatch for {name}")
            params[name].data = arr.astype(np.float32).copy()
            params[name].m = np.zeros_like(params[name].data)
            params[name].v = np.zeros_like(params[name].data)
        net.set_ablation(metadata.get("ablation", "full"))
        return net

    def param_hash(self) -> str:
        digest = hashlib.blake2b(digest_size=16)
        for p in sorted(self.parameters(), key=lambda p: p.name):
            digest.update(p.name.encode())
            digest.update(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
        return digest.hexdigest()


def checkpoint_hash(directory: str | Path) -> str:
    """Hash of the stored parameter bytes (manifest + arrays)."""
    directory = Path(directory)
    digest = hashlib.blake2b(digest_size=16)
    digest.update((directory / "manifest.json").read_bytes())
    digest.update((directory / "params.bin").read_bytes())
    return digest.hexdigest()
