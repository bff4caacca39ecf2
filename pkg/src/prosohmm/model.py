"""Left-to-right no-skip neural HMM over mel-spectrogram frames.

Each input symbol contributes states_per_symbol HMM states. A state's
condition vector mixes the convolutional encoding of its symbol with an
encoded view of the three standardized prosodic controls plus the raw
control vector itself. Per frame, a prenet summarizes the previous frame;
emission mean, emission log-std, and the stay/advance logit are affine
heads over state and prenet context. The exact data likelihood is the
forward-algorithm sum over all monotone no-skip alignments ending in the
final state.

Two independent computation routes exist on purpose: evaluation paths
(forward_nll, viterbi_align, synthesize) run on plain numpy, while
grad_nll rebuilds the same mathematics on the autodiff tape. The test
suite holds the routes against each other and against enumeration and
finite-difference oracles. Emissions are modeled in a normalized space,
(log-mel - mel_offset) / mel_scale, so silence sits at zero and typical
values are order one; mel_offset/mel_scale live in ModelConfig.
"""

from __future__ import annotations

import dataclasses
import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .audio import MelConfig, MelSpectrogram
from .corpus import SymbolSequence
from .errors import (
    CheckpointError,
    NonFiniteLossError,
    NumericalError,
    ValidationError,
)
from .prosody import StandardizedFeatures

CONV_KERNEL = 5
LOG_STD_MIN = -7.0
LOG_STD_MAX = 4.0
_LOG_2PI = math.log(2.0 * math.pi)

_CHECKPOINT_MAGIC = b"PHMM"
_CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Architecture dimensions plus the emission normalization constants."""

    vocab_size: int
    embedding_dim: int = 32
    feature_dim: int = 3
    feature_embed_dim: int = 32
    states_per_symbol: int = 2
    hidden_dim: int = 64
    n_mels: int = 80
    prenet_dim: int = 32
    seed: int = 0
    mel_offset: float = math.log(1e-5)
    mel_scale: float = 3.0

    def __post_init__(self) -> None:
        dims = (
            self.vocab_size,
            self.embedding_dim,
            self.feature_dim,
            self.feature_embed_dim,
            self.states_per_symbol,
            self.hidden_dim,
            self.n_mels,
            self.prenet_dim,
        )
        if any(d < 1 for d in dims):
            raise ValidationError("all model dimensions must be >= 1")
        if self.vocab_size < 2:
            raise ValidationError("vocab_size must cover the two sentinels")
        if self.feature_embed_dim != self.embedding_dim:
            raise ValidationError(
                "feature_embed_dim must equal embedding_dim (concatenation rule)"
            )
        if self.feature_dim != 3:
            raise ValidationError("feature_dim is the 3 prosodic controls")
        if self.mel_scale <= 0:
            raise ValidationError("mel_scale must be positive")


def _parameter_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    e, f = cfg.embedding_dim, cfg.feature_embed_dim
    h, m, p = cfg.hidden_dim, cfg.n_mels, cfg.prenet_dim
    return {
        "embedding": (cfg.vocab_size, e),
        "conv1_w": (CONV_KERNEL * e, e),
        "conv1_b": (e,),
        "conv2_w": (CONV_KERNEL * e, e),
        "conv2_b": (e,),
        "feat_w": (cfg.feature_dim, f),
        "feat_b": (f,),
        "proj_w": (e + f + cfg.feature_dim, h),
        "proj_b": (h,),
        "substate_offset": (cfg.states_per_symbol, h),
        "prenet_w": (m, p),
        "prenet_b": (p,),
        "emit_w": (h + p, m),
        "emit_b": (m,),
        "logstd_w": (h, m),
        "logstd_b": (m,),
        "trans_w": (h + p, 1),
        "trans_b": (1,),
    }


def _init_bounds(cfg: ModelConfig) -> dict[str, float]:
    """Uniform init half-width sqrt(6 / (fan_in + fan_out)) per affine map."""
    e, f = cfg.embedding_dim, cfg.feature_embed_dim
    h, m, p = cfg.hidden_dim, cfg.n_mels, cfg.prenet_dim
    conv = math.sqrt(6.0 / (CONV_KERNEL * e + CONV_KERNEL * e))
    bounds = {
        "embedding": math.sqrt(6.0 / (cfg.vocab_size + e)),
        "conv1_w": conv,
        "conv1_b": conv,
        "conv2_w": conv,
        "conv2_b": conv,
        "feat_w": math.sqrt(6.0 / (cfg.feature_dim + f)),
        "feat_b": math.sqrt(6.0 / (cfg.feature_dim + f)),
        "proj_w": math.sqrt(6.0 / (e + f + cfg.feature_dim + h)),
        "proj_b": math.sqrt(6.0 / (e + f + cfg.feature_dim + h)),
        "substate_offset": math.sqrt(6.0 / (e + f + cfg.feature_dim + h)),
        "prenet_w": math.sqrt(6.0 / (m + p)),
        "prenet_b": math.sqrt(6.0 / (m + p)),
        "emit_w": math.sqrt(6.0 / (h + p + m)),
        "emit_b": math.sqrt(6.0 / (h + p + m)),
        "logstd_w": math.sqrt(6.0 / (h + m)),
        "logstd_b": 0.0,  # pinned: unit std at init
        "trans_w": math.sqrt(6.0 / (h + p + 1)),
        "trans_b": 0.0,  # pinned below to -1: favor stay early
    }
    return bounds


@dataclass
class NeuralHmmModel:
    """Parameter dictionary plus configuration and a training step counter."""

    config: ModelConfig
    params: dict[str, np.ndarray]
    iteration: int = 0

    def parameter_count(self) -> int:
        return sum(v.size for v in self.params.values())

    def copy(self) -> "NeuralHmmModel":
        return NeuralHmmModel(
            self.config, {k: v.copy() for k, v in self.params.items()}, self.iteration
        )


def init_model(cfg: ModelConfig) -> NeuralHmmModel:
    """Seeded uniform initialization; draws happen in declaration order."""
    rng = np.random.default_rng(cfg.seed)
    shapes = _parameter_shapes(cfg)
    bounds = _init_bounds(cfg)
    params = {}
    for name, shape in shapes.items():
        a = bounds[name]
        params[name] = rng.uniform(-a, a, size=shape) if a > 0 else np.zeros(shape)
    params["trans_b"] = np.full((1,), -1.0)
    return NeuralHmmModel(cfg, params)


@dataclass(frozen=True)
class StateChain:
    """Condition vectors for the HMM states of one utterance.

    Keeps the inputs that produced it (symbol ids and controls) so the
    gradient path can rebuild the same computation on the tape.
    """

    h: np.ndarray  # (n_states, hidden_dim)
    symbol_of_state: np.ndarray  # (n_states,) index into symbol_ids
    symbol_ids: tuple[int, ...]
    z: StandardizedFeatures

    @property
    def n_states(self) -> int:
        return self.h.shape[0]


@dataclass(frozen=True)
class AlignmentPath:
    """Per-frame 0-based state indices; starts at state 0, unit steps only."""

    states: np.ndarray
    n_states: int

    def __post_init__(self) -> None:
        q = np.asarray(self.states, dtype=np.int64)
        object.__setattr__(self, "states", q)
        if len(q) == 0 or q[0] != 0:
            raise ValidationError("alignment must start in the first state")
        steps = np.diff(q)
        if np.any((steps < 0) | (steps > 1)):
            raise ValidationError("alignment steps must be 0 or +1 (no skips)")
        if q[-1] >= self.n_states:
            raise ValidationError("alignment state outside the chain")


@dataclass(frozen=True)
class SynthesisResult:
    mel: MelSpectrogram
    path: AlignmentPath
    truncated: bool


@dataclass(frozen=True)
class TrainConfig:
    """Plain SGD settings. learning_rate 0 is allowed for dry runs."""

    iterations: int
    learning_rate: float = 1e-3
    batch_size: int = 8
    grad_clip: float = 5.0
    seed: int = 0
    init_from: str | None = None
    checkpoint_path: str | None = None
    checkpoint_interval: int = 0  # 0: checkpoint only at the end

    def __post_init__(self) -> None:
        if self.learning_rate < 0:
            raise ValidationError("learning_rate must be >= 0")
        if self.iterations < 0:
            raise ValidationError("iterations must be >= 0")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.grad_clip <= 0:
            raise ValidationError("grad_clip must be positive")


@dataclass(frozen=True)
class TrainingExample:
    """Cached inputs for one utterance: ids, controls, raw log-mel frames."""

    utt_id: str
    symbol_ids: tuple[int, ...]
    z: StandardizedFeatures
    mel_frames: np.ndarray  # (T, n_mels), raw log-mel


# ---------------------------------------------------------------------------
# Encoding (numpy route)
# ---------------------------------------------------------------------------


def _conv_layer_np(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    # kernel-5 same-padded 1-D convolution as one matmul over shifted copies
    pad = CONV_KERNEL // 2
    l = x.shape[0]
    xp = np.concatenate([np.zeros((pad, x.shape[1])), x, np.zeros((pad, x.shape[1]))])
    stacked = np.concatenate([xp[k : k + l] for k in range(CONV_KERNEL)], axis=1)
    return np.tanh(stacked @ w + b)


def encode(
    model: NeuralHmmModel, symbols: SymbolSequence, z: StandardizedFeatures
) -> StateChain:
    """Expand symbols into per-state condition vectors given the controls."""
    cfg = model.config
    ids = np.asarray(symbols.symbols, dtype=np.int64)
    if np.any(ids >= cfg.vocab_size):
        raise ValidationError("symbol id outside the model's vocabulary")
    p = model.params
    e = p["embedding"][ids]
    e = _conv_layer_np(e, p["conv1_w"], p["conv1_b"])
    e = _conv_layer_np(e, p["conv2_w"], p["conv2_b"])
    zvec = z.as_array()
    f = zvec @ p["feat_w"] + p["feat_b"]
    l = len(ids)
    x = np.concatenate(
        [e, np.tile(f, (l, 1)), np.tile(zvec, (l, 1))], axis=1
    )  # (L, e+f+3)
    proj = x @ p["proj_w"] + p["proj_b"]  # (L, hidden)
    s = cfg.states_per_symbol
    h = np.tanh(np.repeat(proj, s, axis=0) + np.tile(p["substate_offset"], (l, 1)))
    return StateChain(
        h=h,
        symbol_of_state=np.repeat(np.arange(l), s),
        symbol_ids=tuple(int(i) for i in ids),
        z=z,
    )


# ---------------------------------------------------------------------------
# Emission / transition terms (numpy route)
# ---------------------------------------------------------------------------


def _normalize_frames(cfg: ModelConfig, frames: np.ndarray) -> np.ndarray:
    return (frames - cfg.mel_offset) / cfg.mel_scale


def _prenet_inputs(cfg: ModelConfig, y_norm: np.ndarray) -> np.ndarray:
    # frame t conditions on frame t-1; the zero vector (normalized silence)
    # stands in before the first frame
    return np.concatenate([np.zeros((1, cfg.n_mels)), y_norm[:-1]], axis=0)


def emission_log_probs(
    model: NeuralHmmModel, chain: StateChain, mel: MelSpectrogram
) -> np.ndarray:
    """Per-frame per-state diagonal-Gaussian log-density, shape (T, N)."""
    cfg = model.config
    p = model.params
    if mel.frames.shape[1] != cfg.n_mels:
        raise ValidationError("mel band count does not match the model")
    y = _normalize_frames(cfg, mel.frames)
    pre = np.tanh(_prenet_inputs(cfg, y) @ p["prenet_w"] + p["prenet_b"])  # (T, P)
    hdim = cfg.hidden_dim
    a = chain.h @ p["emit_w"][:hdim]  # state part of the mean, (N, M)
    b = pre @ p["emit_w"][hdim:] + p["emit_b"]  # context part, (T, M)
    ls = np.clip(chain.h @ p["logstd_w"] + p["logstd_b"], LOG_STD_MIN, LOG_STD_MAX)
    w = np.exp(-2.0 * ls)  # inverse variances, (N, M)
    u = y - b  # (T, M)
    quad = u**2 @ w.T - 2.0 * (u @ (a * w).T) + (a**2 * w).sum(axis=1)
    return -0.5 * quad - ls.sum(axis=1) - 0.5 * cfg.n_mels * _LOG_2PI


def transition_logits(
    model: NeuralHmmModel, chain: StateChain, mel: MelSpectrogram
) -> np.ndarray:
    """Advance logit per (frame, state), shape (T, N); sigmoid = advance prob."""
    cfg = model.config
    p = model.params
    y = _normalize_frames(cfg, mel.frames)
    pre = np.tanh(_prenet_inputs(cfg, y) @ p["prenet_w"] + p["prenet_b"])
    hdim = cfg.hidden_dim
    g_state = (chain.h @ p["trans_w"][:hdim])[:, 0]  # (N,)
    g_ctx = (pre @ p["trans_w"][hdim:])[:, 0] + p["trans_b"][0]  # (T,)
    return g_ctx[:, None] + g_state[None, :]


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


def _check_lattice(values: np.ndarray, what: str) -> None:
    bad = np.isnan(values) | np.isposinf(values)
    if bad.any():
        t, i = np.argwhere(bad)[0]
        raise NumericalError(f"non-finite {what} at frame {t}, state {i}")


def forward_nll(
    model: NeuralHmmModel, chain: StateChain, mel: MelSpectrogram
) -> float:
    """Exact per-frame negative log-likelihood over all legal alignments."""
    n = chain.n_states
    t_total = mel.n_frames
    if t_total < n:
        raise ValidationError(
            f"{t_total} frames cannot cover {n} states without skips"
        )
    ell = emission_log_probs(model, chain, mel)  # (T, N)
    _check_lattice(ell, "emission log-density")
    g = transition_logits(model, chain, mel)
    _check_lattice(g, "transition logit")
    log_adv = _log_sigmoid(g)
    log_stay = _log_sigmoid(-g)

    alpha = np.full(n, -np.inf)
    alpha[0] = ell[0, 0]
    for t in range(1, t_total):
        stay = alpha + log_stay[t - 1]
        adv = np.concatenate([[-np.inf], alpha[:-1] + log_adv[t - 1, :-1]])
        alpha = np.logaddexp(stay, adv) + ell[t]
        bad = np.isnan(alpha) | np.isposinf(alpha)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise NumericalError(
                f"non-finite forward variable at frame {t}, state {i}"
            )
    return float(-alpha[-1] / t_total)


def viterbi_align(
    model: NeuralHmmModel, chain: StateChain, mel: MelSpectrogram
) -> AlignmentPath:
    """Best legal alignment; ties prefer staying in the current state."""
    n = chain.n_states
    t_total = mel.n_frames
    if t_total < n:
        raise ValidationError(
            f"{t_total} frames cannot cover {n} states without skips"
        )
    ell = emission_log_probs(model, chain, mel)
    _check_lattice(ell, "emission log-density")
    g = transition_logits(model, chain, mel)
    _check_lattice(g, "transition logit")
    log_adv = _log_sigmoid(g)
    log_stay = _log_sigmoid(-g)

    delta = np.full(n, -np.inf)
    delta[0] = ell[0, 0]
    came_by_stay = np.zeros((t_total, n), dtype=bool)
    came_by_stay[0, 0] = True
    for t in range(1, t_total):
        stay = delta + log_stay[t - 1]
        adv = np.concatenate([[-np.inf], delta[:-1] + log_adv[t - 1, :-1]])
        came_by_stay[t] = stay >= adv
        delta = np.where(came_by_stay[t], stay, adv) + ell[t]
    path = np.empty(t_total, dtype=np.int64)
    path[-1] = n - 1
    for t in range(t_total - 1, 0, -1):
        path[t - 1] = path[t] if came_by_stay[t, path[t]] else path[t] - 1
    return AlignmentPath(path, n)


def viterbi_log_prob(
    model: NeuralHmmModel, chain: StateChain, mel: MelSpectrogram, path: AlignmentPath
) -> float:
    """Joint log-probability of one alignment path (for consistency checks)."""
    ell = emission_log_probs(model, chain, mel)
    g = transition_logits(model, chain, mel)
    log_adv = _log_sigmoid(g)
    log_stay = _log_sigmoid(-g)
    q = path.states
    total = ell[0, q[0]]
    for t in range(1, len(q)):
        trans = log_stay[t - 1, q[t - 1]] if q[t] == q[t - 1] else log_adv[t - 1, q[t - 1]]
        total += trans + ell[t, q[t]]
    return float(total)


# ---------------------------------------------------------------------------
# Synthesis (numpy route)
# ---------------------------------------------------------------------------


def synthesize(
    model: NeuralHmmModel,
    symbols: SymbolSequence,
    z: StandardizedFeatures,
    max_frames: int,
    mel_config: MelConfig | None = None,
) -> SynthesisResult:
    """Deterministic mean-emission generation.

    Starting in the first state with a silence context, each step emits the
    Gaussian mean, then advances iff the advance logit is nonnegative
    (sigmoid >= 0.5). Generation ends when the final state fires its advance
    or at max_frames, whichever comes first. The truncation flag records
    hitting max_frames without ever entering the final state.
    """
    cfg = model.config
    mel_config = mel_config or MelConfig(n_mels=cfg.n_mels)
    if mel_config.n_mels != cfg.n_mels:
        raise ValidationError("mel config band count does not match the model")
    chain = encode(model, symbols, z)
    n = chain.n_states
    if max_frames < n:
        raise ValidationError(f"max_frames {max_frames} below state count {n}")
    p = model.params
    hdim = cfg.hidden_dim
    a = chain.h @ p["emit_w"][:hdim]  # (N, M)
    g_state = (chain.h @ p["trans_w"][:hdim])[:, 0]  # (N,)

    frames = np.empty((max_frames, cfg.n_mels))
    states = np.empty(max_frames, dtype=np.int64)
    prev = np.zeros(cfg.n_mels)  # normalized silence
    state = 0
    emitted = 0
    for t in range(max_frames):
        pre = np.tanh(prev @ p["prenet_w"] + p["prenet_b"])
        mean = a[state] + pre @ p["emit_w"][hdim:] + p["emit_b"]
        frames[t] = mean
        states[t] = state
        emitted = t + 1
        logit = g_state[state] + float((pre @ p["trans_w"][hdim:])[0]) + p["trans_b"][0]
        prev = mean
        if logit >= 0.0:  # sigmoid(logit) >= 0.5: advance
            if state == n - 1:
                break
            state += 1
    truncated = int(states[emitted - 1]) != n - 1
    raw = np.maximum(frames[:emitted] * cfg.mel_scale + cfg.mel_offset, cfg.mel_offset)
    return SynthesisResult(
        mel=MelSpectrogram(raw, mel_config),
        path=AlignmentPath(states[:emitted], n),
        truncated=truncated,
    )


# ---------------------------------------------------------------------------
# Gradient route (autodiff tape)
# ---------------------------------------------------------------------------


def _conv_layer_tape(x: ad.Tensor, w: ad.Tensor, b: ad.Tensor) -> ad.Tensor:
    pad = CONV_KERNEL // 2
    l = x.shape[0]
    zeros = ad.Tensor(np.zeros((pad, x.shape[1])))
    xp = ad.concatenate([zeros, x, zeros], axis=0)
    stacked = ad.concatenate(
        [xp[k : k + l] for k in range(CONV_KERNEL)], axis=1
    )
    return ad.tanh(ad.matmul(stacked, w) + b)


def _nll_graph(
    params: dict[str, ad.Tensor],
    cfg: ModelConfig,
    symbol_ids: tuple[int, ...],
    z: StandardizedFeatures,
    mel_frames: np.ndarray,
) -> ad.Tensor:
    """The full likelihood computation as one tape graph; returns scalar NLL."""
    n_sym = len(symbol_ids)
    s = cfg.states_per_symbol
    n = n_sym * s
    t_total = mel_frames.shape[0]
    if t_total < n:
        raise ValidationError(
            f"{t_total} frames cannot cover {n} states without skips"
        )

    e = ad.embedding_lookup(params["embedding"], list(symbol_ids))
    e = _conv_layer_tape(e, params["conv1_w"], params["conv1_b"])
    e = _conv_layer_tape(e, params["conv2_w"], params["conv2_b"])
    zvec = z.as_array()
    f = ad.matmul(ad.Tensor(zvec[None, :]), params["feat_w"]) + params["feat_b"]
    ones = ad.Tensor(np.ones((n_sym, 1)))
    x = ad.concatenate(
        [e, ad.matmul(ones, f), ad.Tensor(np.tile(zvec, (n_sym, 1)))], axis=1
    )
    proj = ad.matmul(x, params["proj_w"]) + params["proj_b"]
    h = ad.tanh(
        proj[np.repeat(np.arange(n_sym), s)]
        + params["substate_offset"][np.tile(np.arange(s), n_sym)]
    )  # (N, hidden)

    y = _normalize_frames(cfg, mel_frames)
    pre_in = ad.Tensor(_prenet_inputs(cfg, y))
    pre = ad.tanh(ad.matmul(pre_in, params["prenet_w"]) + params["prenet_b"])

    hdim = cfg.hidden_dim
    a = ad.matmul(h, params["emit_w"][:hdim])  # (N, M)
    b = ad.matmul(pre, params["emit_w"][hdim:]) + params["emit_b"]  # (T, M)
    ls = ad.clip(
        ad.matmul(h, params["logstd_w"]) + params["logstd_b"],
        LOG_STD_MIN,
        LOG_STD_MAX,
    )
    w = ad.exp(ls * (-2.0))
    u = ad.Tensor(y) - b
    quad = (
        ad.matmul(u**2, ad.transpose(w))
        - 2.0 * ad.matmul(u, ad.transpose(a * w))
        + ad.tsum(a**2 * w, axis=1)
    )
    ell = quad * (-0.5) - ad.tsum(ls, axis=1) - 0.5 * cfg.n_mels * _LOG_2PI

    g_state = ad.matmul(h, params["trans_w"][:hdim])[:, 0]  # (N,)
    g_ctx = ad.matmul(pre, params["trans_w"][hdim:]) + params["trans_b"][0]  # (T, 1)
    # log sigmoid(g) = -softplus(-g); log sigmoid(-g) = -softplus(g)
    g = g_ctx + g_state  # (T, 1) + (N,) broadcast
    log_adv = -ad.softplus(-g)
    log_stay = -ad.softplus(g)

    start_mask = np.full(n, -np.inf)
    start_mask[0] = 0.0
    alpha = ell[0] + ad.Tensor(start_mask)
    neg_inf1 = ad.Tensor(np.array([-np.inf]))
    for t in range(1, t_total):
        stay = alpha + log_stay[t - 1]
        adv = ad.concatenate([neg_inf1, (alpha + log_adv[t - 1])[: n - 1]], axis=0)
        alpha = ad.logaddexp(stay, adv) + ell[t]
    return alpha[n - 1] * (-1.0 / t_total)


def _tape_params(model: NeuralHmmModel) -> dict[str, ad.Tensor]:
    return {k: ad.parameter(v) for k, v in model.params.items()}


def grad_nll(
    model: NeuralHmmModel, chain: StateChain, mel: MelSpectrogram
) -> tuple[float, dict[str, np.ndarray]]:
    """NLL and its gradient for one utterance, via the tape route."""
    params = _tape_params(model)
    loss = _nll_graph(params, model.config, chain.symbol_ids, chain.z, mel.frames)
    if not np.isfinite(loss.data):
        raise NumericalError("non-finite loss in gradient computation")
    ad.backward(loss)
    grads = {
        k: (t.grad if t.grad is not None else np.zeros_like(t.data))
        for k, t in params.items()
    }
    return float(loss.data), grads


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _grad_norm(grads: dict[str, np.ndarray]) -> float:
    return math.sqrt(sum(float((g * g).sum()) for g in grads.values()))


def train(
    model: NeuralHmmModel,
    examples: list[TrainingExample],
    cfg: TrainConfig,
) -> tuple[NeuralHmmModel, list[float]]:
    """Plain SGD on per-frame NLL with global gradient-norm clipping.

    The batch schedule is a pure function of (seed, epoch index), so a
    model resumed from iteration k continues the exact trace a single
    longer run would have produced. Returns the trained model and one
    mean batch loss per iteration.
    """
    if not examples:
        raise ValidationError("no training examples")
    if cfg.init_from is not None:
        model = load_checkpoint(cfg.init_from)
    model = model.copy()
    n = len(examples)
    batches_per_epoch = max(1, math.ceil(n / cfg.batch_size))
    trace: list[float] = []

    for _ in range(cfg.iterations):
        epoch, offset = divmod(model.iteration, batches_per_epoch)
        order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        batch_ids = order[offset * cfg.batch_size : (offset + 1) * cfg.batch_size]

        params = _tape_params(model)
        total = None
        for idx in batch_ids:
            ex = examples[int(idx)]
            nll = _nll_graph(params, model.config, ex.symbol_ids, ex.z, ex.mel_frames)
            if not np.isfinite(nll.data):
                raise NonFiniteLossError(ex.utt_id, model.iteration)
            total = nll if total is None else total + nll
        loss = total * (1.0 / len(batch_ids))
        ad.backward(loss)

        grads = {
            k: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for k, t in params.items()
        }
        norm = _grad_norm(grads)
        scale = cfg.grad_clip / norm if norm > cfg.grad_clip else 1.0
        for k in model.params:
            model.params[k] = model.params[k] - cfg.learning_rate * scale * grads[k]
        model.iteration += 1
        trace.append(float(loss.data))

        if (
            cfg.checkpoint_path is not None
            and cfg.checkpoint_interval > 0
            and model.iteration % cfg.checkpoint_interval == 0
        ):
            save_checkpoint(model, cfg.checkpoint_path)

    if cfg.checkpoint_path is not None:
        save_checkpoint(model, cfg.checkpoint_path)
    return model, trace


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(model: NeuralHmmModel, path) -> None:
    """Versioned container: JSON header plus little-endian float64 blocks."""
    tensors = []
    offset = 0
    blobs = []
    for name, value in model.params.items():
        blob = np.ascontiguousarray(value, dtype="<f8").tobytes()
        tensors.append(
            {
                "name": name,
                "shape": list(value.shape),
                "offset": offset,
                "size": len(blob),
            }
        )
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps(
        {
            "format_version": _CHECKPOINT_VERSION,
            "iteration": model.iteration,
            "config": dataclasses.asdict(model.config),
            "tensors": tensors,
        }
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", _CHECKPOINT_VERSION, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> NeuralHmmModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _CHECKPOINT_MAGIC:
        raise CheckpointError("not a model checkpoint (bad magic)")
    version, header_len = struct.unpack_from("<II", blob, 4)
    if version != _CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(blob[12 : 12 + header_len].decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint header: {exc}") from exc

    config_doc = header.get("config", {})
    expected_fields = {f.name for f in dataclasses.fields(ModelConfig)}
    for name in expected_fields:
        if name not in config_doc:
            raise CheckpointError(f"checkpoint config missing field '{name}'")
    for name in config_doc:
        if name not in expected_fields:
            raise CheckpointError(f"checkpoint config has unknown field '{name}'")
    try:
        cfg = ModelConfig(**config_doc)
    except (TypeError, ValidationError) as exc:
        raise CheckpointError(f"invalid checkpoint config: {exc}") from exc

    shapes = _parameter_shapes(cfg)
    data_start = 12 + header_len
    params: dict[str, np.ndarray] = {}
    for entry in header.get("tensors", []):
        name = entry.get("name")
        if name not in shapes:
            raise CheckpointError(f"checkpoint has unexpected tensor '{name}'")
        shape = tuple(entry["shape"])
        if shape != shapes[name]:
            raise CheckpointError(
                f"tensor '{name}' has shape {shape}, expected {shapes[name]}"
            )
        lo = data_start + entry["offset"]
        hi = lo + entry["size"]
        if hi > len(blob) or entry["size"] != 8 * int(np.prod(shape)):
            raise CheckpointError(f"tensor '{name}' data block is truncated")
        params[name] = np.frombuffer(blob[lo:hi], dtype="<f8").reshape(shape).copy()
    missing = set(shapes) - set(params)
    if missing:
        raise CheckpointError(f"checkpoint missing tensors: {sorted(missing)}")
    return NeuralHmmModel(cfg, params, iteration=int(header.get("iteration", 0)))
