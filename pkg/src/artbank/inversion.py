"""Content-preserving initial noise for stylization.

Instead of sampling from fresh Gaussian noise, the content image is noised
to an intermediate timestep, the frozen denoiser predicts the noise it sees
there (conditioned on text only, so the estimate describes the content),
and that prediction replaces the random draw when the start state is
rebuilt. Deterministic sampling from the rebuilt state then keeps the
content's structure while the style condition repaints it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bank import (DEFAULT_VOCAB_SEED, ConditionVector, StyleBank,
                   assemble_condition, encode_prompt)
from .data_io import ImageSample
from .diffusion import (LatentState, NoiseSchedule, denoiser_forward,
                        q_sample, sample, style_encoding)
from .errors import ConfigError, ContractError
from .seeding import derive_seed
from .tensor import Tensor


@dataclass(frozen=True)
class InversionConfig:
    """Fraction of the schedule applied to the content plus the probe seed."""

    strength: float = 0.6
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 < self.strength <= 1.0):
            raise ConfigError(f"strength must lie in (0, 1]: {self.strength}")


def start_timestep(cfg: InversionConfig, sched: NoiseSchedule) -> int:
    return min(max(1, round(cfg.strength * sched.timesteps)), sched.timesteps)


def probe_noise(cfg: InversionConfig, shape: tuple[int, ...]) -> np.ndarray:
    """The deterministic unit-normal probe drawn from the config seed."""
    rng = np.random.Generator(
        np.random.PCG64(derive_seed(cfg.seed, "inversion-probe")))
    return rng.standard_normal(shape)


def stochastic_invert(d, sched: NoiseSchedule, content: ImageSample,
                      cfg: InversionConfig,
                      cond: ConditionVector) -> tuple[Tensor, int]:
    """Predict the noise the denoiser sees in the noised content image.

    Returns the prediction and the start timestep. ``cond`` should be a
    text-only condition so the estimate describes the content, not a style.
    """
    if not getattr(d, "frozen", True):
        raise ContractError("inversion requires a frozen denoiser")
    t0 = start_timestep(cfg, sched)
    probe = probe_noise(cfg, (content.channels, content.height, content.width))
    state = q_sample(content.to_tensor(), t0, Tensor(probe), sched)
    eps_pred = denoiser_forward(d, state, cond)
    return Tensor(eps_pred.data), t0


def stylize(d, sched: NoiseSchedule, bank: StyleBank, style_id: str,
            content: ImageSample, cfg: InversionConfig,
            vocab_seed: int = DEFAULT_VOCAB_SEED,
            use_inversion: bool = True) -> ImageSample:
    """Render the content image in a bank entry's style.

    Pipeline: predict the content's noise (or keep the random probe when
    ``use_inversion`` is off), rebuild the start state from it, assemble the
    full text+style condition, and run deterministic sampling back to step
    zero. A pure function of (denoiser, entry, content, cfg).
    """
    entry = bank.get(style_id)
    seq = encode_prompt(entry.template, entry.artist, vocab_seed, entry.channels)
    if use_inversion:
        text_cond = assemble_condition(seq, None)
        eps_init, t0 = stochastic_invert(d, sched, content, cfg, text_cond)
        eps_arr = eps_init.data
    else:
        t0 = start_timestep(cfg, sched)
        eps_arr = probe_noise(cfg, (content.channels, content.height,
                                    content.width))
    ab = sched.alpha_bar[t0]
    z_t0 = (np.sqrt(ab) * content.to_tensor().data
            + np.sqrt(1.0 - ab) * eps_arr)
    cond = assemble_condition(seq, style_encoding(entry))
    return sample(d, sched, cond, mode="ddim",
                  init=LatentState(Tensor(z_t0), t0))
