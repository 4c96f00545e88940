"""Toy image-space denoising-diffusion backbone.

A linear-beta noise schedule, a small conditional noise-prediction network
(two 3x3 convs down, one cross-attention block over condition rows, two
convs up, GELU activations, sinusoidal timestep features added after the
first conv), the naive all-parameters trainer, the bank-entry trainer that
keeps the backbone frozen, and DDPM/DDIM samplers.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .attention import (adaattn_forward, init_output_proj, sanet_forward,
                        ssam_forward)
from .bank import (DEFAULT_VOCAB_SEED, ConditionVector, StyleBankEntry,
                   TokenEmbeddingSeq, assemble_condition, encode_prompt)
from .data_io import ImageSample
from .errors import (BadMagicError, ConfigError, ContractError,
                     DimensionError, TruncatedFileError, VersionMismatchError)
from .optim import AdamConfig, AdamState, adam_step, zero_grads
from .seeding import derive_seed
from .tensor import (Parameter, Tensor, conv2d, gelu, matmul, mean_all,
                     reshape, softmax_rows, transpose)

CHECKPOINT_MAGIC = b"ABDN"
CHECKPOINT_VERSION = 1

ATTENTION_VARIANTS = ("ssam", "adaattn", "sanet")


@dataclass(frozen=True)
class NoiseSchedule:
    """Diffusion constants indexed 1..T; index 0 holds the clean limit."""

    timesteps: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray


def make_schedule(timesteps: int = 100, beta_start: float = 1e-4,
                  beta_end: float = 0.02) -> NoiseSchedule:
    if timesteps < 1:
        raise ConfigError("timesteps must be at least 1")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ConfigError("beta range must satisfy 0 < start <= end < 1")
    beta = np.zeros(timesteps + 1)
    beta[1:] = np.linspace(beta_start, beta_end, timesteps)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    return NoiseSchedule(timesteps=timesteps, beta=beta, alpha=alpha,
                         alpha_bar=alpha_bar)


@dataclass
class LatentState:
    """A noisy image tensor together with its diffusion timestep."""

    z: Tensor
    t: int


def _check_t(t: int, sched: NoiseSchedule, lo: int = 1) -> None:
    if not (lo <= t <= sched.timesteps):
        raise ConfigError(
            f"timestep {t} outside [{lo}, {sched.timesteps}]")


def q_sample(z0: Tensor, t: int, eps: Tensor, sched: NoiseSchedule) -> LatentState:
    """Forward-noise a clean tensor to timestep t."""
    _check_t(t, sched)
    if eps.data.shape != z0.data.shape:
        raise DimensionError("noise must match the clean tensor's shape")
    ab = sched.alpha_bar[t]
    z_t = z0 * float(np.sqrt(ab)) + eps * float(np.sqrt(1.0 - ab))
    return LatentState(z=z_t, t=t)


class Denoiser:
    """Conditional noise-prediction network.

    The output head starts at zero so an untrained model predicts zero
    noise; cross-attention uses image positions as queries and condition
    rows as keys/values, which is the path that carries gradients into the
    style block during bank training.
    """

    def __init__(self, in_channels: int = 3, width: int = 32,
                 cond_dim: int = 64, seed: int = 0):
        if in_channels not in (1, 3):
            raise ConfigError("in_channels must be 1 or 3")
        if width < 2 or cond_dim < 1:
            raise ConfigError("width must be >= 2 and cond_dim >= 1")
        self.in_channels = in_channels
        self.width = width
        self.cond_dim = cond_dim
        rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "denoiser-init")))

        def conv_param(name: str, cout: int, cin: int) -> Parameter:
            bound = 1.0 / np.sqrt(cin * 9)
            return Parameter(name, Tensor(rng.uniform(-bound, bound,
                                                      size=(cout, cin, 3, 3))))

        def mat_param(name: str, rows: int, cols: int) -> Parameter:
            bound = 1.0 / np.sqrt(cols)
            return Parameter(name, Tensor(rng.uniform(-bound, bound,
                                                      size=(rows, cols))))

        w = width
        self.conv1_w = conv_param("conv1_w", w, in_channels)
        self.conv1_b = Parameter("conv1_b", Tensor(np.zeros(w)))
        self.conv2_w = conv_param("conv2_w", w, w)
        self.conv2_b = Parameter("conv2_b", Tensor(np.zeros(w)))
        self.attn_wq = mat_param("attn_wq", w, w)
        self.attn_wk = mat_param("attn_wk", w, cond_dim)
        self.attn_wv = mat_param("attn_wv", w, cond_dim)
        self.attn_wo = mat_param("attn_wo", w, w)
        self.conv3_w = conv_param("conv3_w", w, w)
        self.conv3_b = Parameter("conv3_b", Tensor(np.zeros(w)))
        self.conv4_w = Parameter("conv4_w", Tensor(np.zeros((in_channels, w, 3, 3))))
        self.conv4_b = Parameter("conv4_b", Tensor(np.zeros(in_channels)))

        half = w // 2
        if half > 1:
            self._freqs = np.exp(-np.log(10000.0) * np.arange(half) / (half - 1))
        else:
            self._freqs = np.ones(max(half, 1))

    def parameters(self) -> list[Parameter]:
        return [self.conv1_w, self.conv1_b, self.conv2_w, self.conv2_b,
                self.attn_wq, self.attn_wk, self.attn_wv, self.attn_wo,
                self.conv3_w, self.conv3_b, self.conv4_w, self.conv4_b]

    @property
    def frozen(self) -> bool:
        return all(not p.value.requires_grad for p in self.parameters())

    def freeze(self) -> None:
        for p in self.parameters():
            p.value.requires_grad = False
            p.value.grad = None

    def unfreeze(self) -> None:
        for p in self.parameters():
            p.value.requires_grad = True

    def _time_features(self, t: int) -> np.ndarray:
        ang = float(t) * self._freqs
        emb = np.concatenate([np.sin(ang), np.cos(ang)])
        if emb.size < self.width:
            emb = np.concatenate([emb, np.zeros(self.width - emb.size)])
        return emb[:self.width]

    def predict_noise(self, state: LatentState, cond: ConditionVector) -> Tensor:
        z = state.z
        if z.data.ndim != 3 or z.data.shape[0] != self.in_channels:
            raise DimensionError(
                f"latent shape {z.data.shape} does not match in_channels="
                f"{self.in_channels}")
        _, h, w_img = z.data.shape
        temb = Tensor(self._time_features(state.t).reshape(self.width, 1, 1))
        x = gelu(conv2d(z, self.conv1_w.value, self.conv1_b.value) + temb)
        x = gelu(conv2d(x, self.conv2_w.value, self.conv2_b.value))
        feats = reshape(x, (self.width, h * w_img))
        if cond.embeddings is not None:
            if cond.embeddings.data.shape[1] != self.cond_dim:
                raise DimensionError(
                    f"condition width {cond.embeddings.data.shape[1]} does "
                    f"not match cond_dim={self.cond_dim}")
            cond_t = transpose(cond.embeddings)
            keys = matmul(self.attn_wk.value, cond_t)
            values = matmul(self.attn_wv.value, cond_t)
            queries = matmul(self.attn_wq.value, feats)
            scores = matmul(transpose(queries), keys) * (1.0 / np.sqrt(self.width))
            attn = softmax_rows(scores)
            attended = matmul(values, transpose(attn))
            feats = feats + matmul(self.attn_wo.value, attended)
        x = reshape(feats, (self.width, h, w_img))
        x = gelu(conv2d(x, self.conv3_w.value, self.conv3_b.value))
        return conv2d(x, self.conv4_w.value, self.conv4_b.value)


def denoiser_forward(d, state: LatentState, cond: ConditionVector) -> Tensor:
    """Predict the noise component of a latent state under a condition."""
    return d.predict_noise(state, cond)


def checkpoint_bytes(d: Denoiser) -> bytes:
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<H", CHECKPOINT_VERSION))
    buf.write(struct.pack("<III", d.in_channels, d.width, d.cond_dim))
    blobs = [np.ascontiguousarray(p.value.data, dtype="<f8").tobytes()
             for p in d.parameters()]
    total = sum(len(b) for b in blobs) // 8
    buf.write(struct.pack("<I", total))
    for b in blobs:
        buf.write(b)
    return buf.getvalue()


def save_checkpoint(d: Denoiser, path) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(d))


def load_checkpoint(path) -> Denoiser:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 or raw[:4] != CHECKPOINT_MAGIC:
        raise BadMagicError("not a denoiser checkpoint (bad magic)")
    pos = 4
    (version,) = struct.unpack_from("<H", raw, pos)
    pos += 2
    if version != CHECKPOINT_VERSION:
        raise VersionMismatchError(f"unsupported checkpoint version: {version}")
    in_channels, width, cond_dim, total = struct.unpack_from("<IIII", raw, pos)
    pos += 16
    d = Denoiser(in_channels=in_channels, width=width, cond_dim=cond_dim, seed=0)
    expected = sum(p.value.data.size for p in d.parameters())
    if total != expected:
        raise TruncatedFileError(
            f"checkpoint declares {total} values, config needs {expected}")
    if len(raw) - pos < 8 * total:
        raise TruncatedFileError("checkpoint payload is truncated")
    for p in d.parameters():
        n = p.value.data.size
        arr = np.frombuffer(raw[pos:pos + 8 * n], dtype="<f8")
        p.value.data = arr.astype(np.float64).reshape(p.value.data.shape)
        pos += 8 * n
    return d


def _prepare_text_conditions(prompts: Sequence[str], vocab_seed: int,
                             width: int) -> list[ConditionVector]:
    cache: dict[str, ConditionVector] = {}
    conds = []
    for prompt in prompts:
        if prompt not in cache:
            seq = encode_prompt(prompt, "", vocab_seed, width)
            cache[prompt] = assemble_condition(seq, None)
        conds.append(cache[prompt])
    return conds


def train_naive(d: Denoiser, images: Sequence[ImageSample],
                prompts: Sequence[str], sched: NoiseSchedule, steps: int,
                seed: int, lr: float = 1e-3,
                vocab_seed: int = DEFAULT_VOCAB_SEED) -> list[float]:
    """Fine-tune every denoiser parameter on noise prediction.

    Each step draws (image, t ~ uniform{1..T}, unit-normal noise) from the
    seeded generator and minimizes the per-element squared error between the
    true and predicted noise under the image's text-only condition. Returns
    the per-step loss trace; the denoiser is updated in place.
    """
    if not images:
        raise ConfigError("training requires a non-empty image set")
    if d.frozen:
        raise ContractError("cannot run naive training on a frozen denoiser")
    prompts = list(prompts) or ["an image *"]
    conds = _prepare_text_conditions(
        [prompts[i % len(prompts)] for i in range(len(images))],
        vocab_seed, d.cond_dim)
    tensors = [img.to_tensor() for img in images]
    rng = np.random.Generator(np.random.PCG64(seed))
    params = d.parameters()
    state = AdamState()
    hyper = AdamConfig(lr=lr)
    trace: list[float] = []
    for _ in range(steps):
        idx = int(rng.integers(len(tensors)))
        t = int(rng.integers(1, sched.timesteps + 1))
        eps = Tensor(rng.standard_normal(tensors[idx].data.shape))
        noisy = q_sample(tensors[idx], t, eps, sched)
        pred = d.predict_noise(noisy, conds[idx])
        diff = eps - pred
        loss = mean_all(diff * diff)
        zero_grads(params)
        loss.backward()
        adam_step(params, state, hyper)
        trace.append(loss.item())
    return trace


def style_encoding(entry: StyleBankEntry, variant: str = "ssam",
                   w_o: Parameter | None = None) -> Tensor:
    """Encode an entry's style matrix with the chosen attention encoder."""
    if variant == "ssam":
        return ssam_forward(entry.i_m.value, entry.ssam)
    if variant == "adaattn":
        return adaattn_forward(entry.i_m.value, entry.ssam.w_q,
                               entry.ssam.w_k, entry.ssam.w_v)
    if variant == "sanet":
        if w_o is None:
            raise ConfigError("sanet encoding requires an output projection")
        return sanet_forward(entry.i_m.value, entry.ssam.w_q, entry.ssam.w_k,
                             entry.ssam.w_v, w_o)
    raise ConfigError(f"unknown attention variant: {variant!r}")


def train_ispb(d: Denoiser, entry: StyleBankEntry,
               style_images: Sequence[ImageSample], sched: NoiseSchedule,
               steps: int, seed: int, lr: float = 1e-3,
               vocab_seed: int = DEFAULT_VOCAB_SEED, variant: str = "ssam",
               w_o: Parameter | None = None) -> list[float]:
    """Train one bank entry against a frozen denoiser.

    Gradients flow only into the entry's style matrix and attention-encoder
    weights, through condition assembly and the denoiser's cross-attention.
    Returns the per-step loss trace; the entry is updated in place. The
    residual (sanet) variant needs an extra output projection, created from
    the seed when not supplied.

    Images are visited in seeded shuffled epochs and timesteps are drawn as
    seeded per-block permutations of 1..T (uniform coverage): the per-step
    loss varies strongly with t and across images, and balanced blocks keep
    moving averages of the trace comparable across training stages.
    """
    if not d.frozen:
        raise ContractError("bank training requires a frozen denoiser")
    if not style_images:
        raise ConfigError("training requires a non-empty style collection")
    if variant not in ATTENTION_VARIANTS:
        raise ConfigError(f"unknown attention variant: {variant!r}")
    seq = encode_prompt(entry.template, entry.artist, vocab_seed, entry.channels)
    tensors = [img.to_tensor() for img in style_images]
    rng = np.random.Generator(np.random.PCG64(seed))
    params = {
        "ssam": entry.trainable_params(),
        "adaattn": [entry.i_m, entry.ssam.w_q, entry.ssam.w_k, entry.ssam.w_v],
    }.get(variant)
    if variant == "sanet":
        if w_o is None:
            rng_wo = np.random.Generator(
                np.random.PCG64(derive_seed(seed, "sanet-output-proj")))
            w_o = init_output_proj(entry.channels, rng_wo)
        params = [entry.i_m, entry.ssam.w_q, entry.ssam.w_k, entry.ssam.w_v, w_o]
    state = AdamState()
    hyper = AdamConfig(lr=lr)
    trace: list[float] = []
    t_block: list[int] = []
    img_epoch: list[int] = []
    for _ in range(steps):
        if not img_epoch:
            img_epoch = [int(v) for v in rng.permutation(len(tensors))]
        idx = img_epoch.pop()
        if not t_block:
            t_block = [int(v) for v in
                       rng.permutation(np.arange(1, sched.timesteps + 1))]
        t = t_block.pop()
        eps = Tensor(rng.standard_normal(tensors[idx].data.shape))
        noisy = q_sample(tensors[idx], t, eps, sched)
        cond = assemble_condition(seq, style_encoding(entry, variant, w_o))
        pred = d.predict_noise(noisy, cond)
        diff = eps - pred
        loss = mean_all(diff * diff)
        zero_grads(params)
        loss.backward()
        adam_step(params, state, hyper)
        trace.append(loss.item())
    return trace


def ispb_eval_loss(d: Denoiser, entry: StyleBankEntry,
                   style_images: Sequence[ImageSample], sched: NoiseSchedule,
                   seed: int, n_draws: int = 200,
                   vocab_seed: int = DEFAULT_VOCAB_SEED, variant: str = "ssam",
                   w_o: Parameter | None = None) -> float:
    """Noise-prediction loss of an entry on a fixed probe set (no training).

    Deterministic given the seed; timesteps cycle 1..T so the estimate is
    balanced over the schedule. Used as the pre-training reference when
    measuring how fast an encoder variant converges.
    """
    if not style_images:
        raise ConfigError("evaluation requires a non-empty style collection")
    seq = encode_prompt(entry.template, entry.artist, vocab_seed, entry.channels)
    tensors = [img.to_tensor() for img in style_images]
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "ispb-probe")))
    cond = assemble_condition(seq, style_encoding(entry, variant, w_o))
    cond = ConditionVector(Tensor(cond.embeddings.data), cond.provenance) \
        if cond.embeddings is not None else cond
    total = 0.0
    for draw in range(n_draws):
        idx = draw % len(tensors)
        t = (draw % sched.timesteps) + 1
        eps = rng.standard_normal(tensors[idx].data.shape)
        noisy = q_sample(tensors[idx], t, Tensor(eps), sched)
        pred = d.predict_noise(noisy, cond)
        diff = eps - pred.data
        total += float(np.mean(diff * diff))
    return total / n_draws


def sample(d, sched: NoiseSchedule, cond: ConditionVector, mode: str = "ddim",
           shape: tuple[int, int, int] | None = None, seed: int | None = None,
           init: LatentState | None = None) -> ImageSample:
    """Run the reverse process from pure noise or a provided start state.

    ``ddim`` (eta = 0) is fully deterministic given its start state; ``ddpm``
    additionally draws per-step noise from the seeded generator. The output
    is clamped to [0, 1].
    """
    if mode not in ("ddpm", "ddim"):
        raise ConfigError(f"unknown sampling mode: {mode!r}")
    rng = None
    if init is not None:
        _check_t(init.t, sched)
        z = init.z.data.copy()
        t_start = init.t
        if mode == "ddpm" and t_start > 1:
            if seed is None:
                raise ConfigError("ddpm sampling needs a seed for per-step noise")
            rng = np.random.Generator(np.random.PCG64(seed))
    else:
        if shape is None or seed is None:
            raise ConfigError("sampling from noise requires a shape and a seed")
        rng = np.random.Generator(np.random.PCG64(seed))
        z = rng.standard_normal(shape)
        t_start = sched.timesteps
    for t in range(t_start, 0, -1):
        eps_hat = denoiser_forward(d, LatentState(Tensor(z), t), cond).data
        ab_t = sched.alpha_bar[t]
        ab_prev = sched.alpha_bar[t - 1]
        if mode == "ddim":
            x0 = (z - np.sqrt(1.0 - ab_t) * eps_hat) / np.sqrt(ab_t)
            z = np.sqrt(ab_prev) * x0 + np.sqrt(1.0 - ab_prev) * eps_hat
        else:
            coef = sched.beta[t] / np.sqrt(1.0 - ab_t)
            mean = (z - coef * eps_hat) / np.sqrt(sched.alpha[t])
            if t > 1:
                mean = mean + np.sqrt(sched.beta[t]) * rng.standard_normal(z.shape)
            z = mean
    return ImageSample.from_tensor(Tensor(np.clip(z, 0.0, 1.0)))
