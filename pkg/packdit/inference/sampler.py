"""DDIM samplers for the seven PackDiT tasks."""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
import torch

from ..config import get_config
from ..core.container import TraceStep
from ..core.diffusion import NoiseSchedule, ddim_step, ddim_timesteps, q_sample
from ..core.motion import (
    MotionSequence,
    NormStats,
    TokenGrid,
    denormalize,
    frames_to_tokens_mask,
    normalize,
    patchify,
    unpatchify,
)
from ..exceptions import ValidationError
from ..models.motion import MotionSchema
from ..models.tasks import Coupling, TaskKind
from ..networks.checkpoint import load_checkpoint
from ..networks.dit import PackDiT
from ..networks.text_codec import TextCodec
from ..utils.torch_utils import make_generator
from .requests import SampleRequest

# keeps the known-frame noise stream apart from the main one
KNOWN_NOISE_OFFSET = 0x5EED

EpsFn = Callable[[torch.Tensor, int], torch.Tensor]


@dataclass
class SampleResult:
    task: TaskKind
    motion: Optional[MotionSequence] = None
    caption: Optional[str] = None
    trace: List[TraceStep] = field(default_factory=list)


class PackDiTPipeline:
    """Model, codec, schedule and normalization stats: everything a sampler needs."""

    def __init__(
        self,
        model: PackDiT,
        codec: TextCodec,
        schedule: NoiseSchedule,
        stats: NormStats,
        schema: MotionSchema,
        device: Optional[str] = None,
    ):
        if model.projection is None:
            raise ValidationError("sampling text needs a model with a projection")
        self.device = torch.device(device or get_config().device)
        self.model = model.to(self.device).eval()
        self.codec = codec.to(self.device).eval()
        self.schedule = schedule
        self.stats = stats
        self.schema = schema

    @classmethod
    def from_checkpoint(cls, path: Union[str, Path], device: Optional[str] = None) -> "PackDiTPipeline":
        contents = load_checkpoint(path)
        return cls(contents.model, contents.codec, contents.schedule, contents.stats, contents.schema, device)

    @property
    def patch_size(self) -> int:
        return self.model.config.patch_size

    @property
    def text_shape(self) -> Tuple[int, int]:
        return self.codec.config.latent_tokens, self.model.config.text_latent_dim

    def _randn(self, shape, generator: torch.Generator) -> torch.Tensor:
        # drawn on CPU so a seed means the same noise on every device
        return torch.randn(shape, generator=generator).to(self.device)

    def _motion_shape(self, n_frames: int) -> Tuple[int, int, int]:
        n_tokens = math.ceil(n_frames / self.patch_size)
        if n_tokens > self.model.config.max_motion_tokens:
            raise ValidationError(
                f"{n_frames} frames need {n_tokens} tokens, more than {self.model.config.max_motion_tokens}"
            )
        return 1, n_tokens, self.model.config.motion_token_dim

    def motion_tokens(self, seq: MotionSequence) -> Tuple[torch.Tensor, torch.Tensor]:
        """(1, N, D) normalized tokens and (1, N) token mask of a clean motion."""
        if seq.schema != self.schema:
            raise ValidationError(f"motion schema {seq.schema.name} != model schema {self.schema.name}")
        grid = patchify(normalize(seq, self.stats), self.patch_size)
        self._motion_shape(seq.n_frames)
        tokens = torch.as_tensor(grid.tokens, dtype=torch.float32).unsqueeze(0).to(self.device)
        mask = torch.as_tensor(grid.token_mask()).unsqueeze(0).to(self.device)
        return tokens, mask

    def tokens_to_motion(self, tokens: torch.Tensor, n_frames: int) -> MotionSequence:
        array = tokens[0].detach().cpu().double().numpy()
        origin = array.shape[0] * self.patch_size
        frame_mask = np.arange(origin) < n_frames
        grid = TokenGrid(tokens=array, patch_size=self.patch_size, origin_frames=origin, frame_mask=frame_mask)
        return denormalize(unpatchify(grid, self.schema), self.stats)

    @torch.no_grad()
    def caption_latents(self, caption: str) -> torch.Tensor:
        return self.model.projection.project(self.codec.encode([caption]))

    @torch.no_grad()
    def latents_to_caption(self, latents: torch.Tensor) -> str:
        return self.codec.decode(self.model.projection.unproject(latents))[0]

    def _reverse(
        self,
        x: torch.Tensor,
        eps_fn: EpsFn,
        request: SampleRequest,
        generator: torch.Generator,
        trace: Optional[List[TraceStep]],
        after_step: Optional[Callable[[torch.Tensor, int], torch.Tensor]] = None,
    ) -> torch.Tensor:
        for t, t_prev in ddim_timesteps(self.schedule.T, request.steps):
            eps = eps_fn(x, t)
            noise = self._randn(x.shape, generator) if request.eta > 0 else None
            x = ddim_step(x, eps, t, t_prev, request.eta, self.schedule, noise)
            if after_step is not None:
                x = after_step(x, t_prev)
            if trace is not None:
                trace.append(TraceStep(t=t, t_prev=t_prev, latent=x[0].detach().cpu().numpy()))
        return x

    def _text_condition(self, latents: torch.Tensor, request: SampleRequest):
        """eps_fn pieces for a motion chain reading a clean text condition at t=0."""
        coupling = Coupling.MOTION_READS_TEXT if request.mutual_enabled else Coupling.NONE
        if request.use_condition_cache:
            states = self.model.condition_states("text", latents)

            def eps_fn(x, t):
                return self.model.forward_pair(x, t, None, None, coupling=coupling, text_context=states)[0]
        else:

            def eps_fn(x, t):
                return self.model.forward_pair(x, t, latents, 0, coupling=coupling)[0]

        return eps_fn

    @torch.no_grad()
    def sample_uncond_motion(self, request: SampleRequest) -> SampleResult:
        generator = make_generator(request.seed)
        x = self._randn(self._motion_shape(request.n_frames), generator)
        trace = [] if request.trace else None
        x = self._reverse(
            x,
            lambda x, t: self.model.forward_pair(x, t, None, None, coupling=Coupling.NONE)[0],
            request,
            generator,
            trace,
        )
        return SampleResult(request.task, motion=self.tokens_to_motion(x, request.n_frames), trace=trace or [])

    @torch.no_grad()
    def sample_uncond_text(self, request: SampleRequest) -> SampleResult:
        generator = make_generator(request.seed)
        x = self._randn((1, *self.text_shape), generator)
        trace = [] if request.trace else None
        x = self._reverse(
            x,
            lambda x, t: self.model.forward_pair(None, None, x, t, coupling=Coupling.NONE)[1],
            request,
            generator,
            trace,
        )
        return SampleResult(request.task, caption=self.latents_to_caption(x), trace=trace or [])

    @torch.no_grad()
    def sample_t2m(self, request: SampleRequest) -> SampleResult:
        generator = make_generator(request.seed)
        x = self._randn(self._motion_shape(request.n_frames), generator)
        eps_fn = self._text_condition(self.caption_latents(request.caption), request)
        trace = [] if request.trace else None
        x = self._reverse(x, eps_fn, request, generator, trace)
        return SampleResult(request.task, motion=self.tokens_to_motion(x, request.n_frames), trace=trace or [])

    @torch.no_grad()
    def sample_m2t(self, request: SampleRequest) -> SampleResult:
        generator = make_generator(request.seed)
        x = self._randn((1, *self.text_shape), generator)
        tokens, mask = self.motion_tokens(request.motion)
        coupling = Coupling.TEXT_READS_MOTION if request.mutual_enabled else Coupling.NONE
        if request.use_condition_cache:
            states = self.model.condition_states("motion", tokens, mask)

            def eps_fn(x, t):
                return self.model.forward_pair(
                    None, None, x, t, coupling=coupling, motion_mask=mask, motion_context=states
                )[1]
        else:

            def eps_fn(x, t):
                return self.model.forward_pair(tokens, 0, x, t, coupling=coupling, motion_mask=mask)[1]

        trace = [] if request.trace else None
        x = self._reverse(x, eps_fn, request, generator, trace)
        return SampleResult(request.task, caption=self.latents_to_caption(x), trace=trace or [])

    @torch.no_grad()
    def sample_joint(self, request: SampleRequest) -> SampleResult:
        """Both chains from noise on one shared timestep schedule."""
        generator = make_generator(request.seed)
        x_m = self._randn(self._motion_shape(request.n_frames), generator)
        x_t = self._randn((1, *self.text_shape), generator)
        coupling = Coupling.MUTUAL if request.mutual_enabled else Coupling.NONE
        trace = []
        for t, t_prev in ddim_timesteps(self.schedule.T, request.steps):
            eps_m, eps_t = self.model.forward_pair(x_m, t, x_t, t, coupling=coupling)
            noise_m = noise_t = None
            if request.eta > 0:
                noise_m = self._randn(x_m.shape, generator)
                noise_t = self._randn(x_t.shape, generator)
            x_m = ddim_step(x_m, eps_m, t, t_prev, request.eta, self.schedule, noise_m)
            x_t = ddim_step(x_t, eps_t, t, t_prev, request.eta, self.schedule, noise_t)
            if request.trace:
                trace.append(TraceStep(t=t, t_prev=t_prev, latent=x_m[0].cpu().numpy()))
                trace.append(TraceStep(t=t, t_prev=t_prev, latent=x_t[0].cpu().numpy()))
        return SampleResult(
            request.task,
            motion=self.tokens_to_motion(x_m, request.n_frames),
            caption=self.latents_to_caption(x_t),
            trace=trace,
        )

    @torch.no_grad()
    def sample_inpaint(self, request: SampleRequest) -> SampleResult:
        """Reverse-process inpainting: known frames are re-noised to t_prev after every step.

        Uses the unconditional motion chain, or the text-conditioned one when the
        request carries a caption. The known frames are copied back exactly at the end.
        """
        seq = request.motion
        keep = request.frame_mask()
        if keep.shape != (seq.n_frames,):
            raise ValidationError(f"keep mask of shape {keep.shape} for {seq.n_frames} frames")
        dim = self.schema.total_dim
        known, _ = self.motion_tokens(seq)
        shape = known.shape
        known_frames = known.reshape(1, -1, dim)
        padded_keep = frames_to_tokens_mask(keep, self.patch_size)
        frame_keep = torch.as_tensor(padded_keep, device=self.device).view(1, -1, 1)

        generator = make_generator(request.seed)
        known_generator = make_generator(request.seed + KNOWN_NOISE_OFFSET)
        x = self._randn(self._motion_shape(seq.n_frames), generator)
        if request.caption is not None:
            eps_fn = self._text_condition(self.caption_latents(request.caption), request)
        else:

            def eps_fn(x, t):
                return self.model.forward_pair(x, t, None, None, coupling=Coupling.NONE)[0]

        def replace_known(x: torch.Tensor, t_prev: int) -> torch.Tensor:
            if not padded_keep.any():
                return x
            if t_prev == 0:
                target = known_frames
            else:
                eps = self._randn(known_frames.shape, known_generator)
                target = q_sample(known_frames, t_prev, eps, self.schedule)
            frames = torch.where(frame_keep, target, x.reshape(1, -1, dim))
            return frames.reshape(shape)

        trace = [] if request.trace else None
        x = self._reverse(x, eps_fn, request, generator, trace, after_step=replace_known)
        generated = self.tokens_to_motion(x, seq.n_frames)
        data = np.where(keep[:, None], seq.data, generated.data)
        return SampleResult(request.task, motion=MotionSequence(self.schema, data), trace=trace or [])

    def sample(self, request: SampleRequest) -> SampleResult:
        """Dispatch on ``request.task``."""
        samplers = {
            TaskKind.UNCOND_MOTION: self.sample_uncond_motion,
            TaskKind.UNCOND_TEXT: self.sample_uncond_text,
            TaskKind.T2M: self.sample_t2m,
            TaskKind.M2T: self.sample_m2t,
            TaskKind.JOINT: self.sample_joint,
            TaskKind.PREDICT: self.sample_inpaint,
            TaskKind.INBETWEEN: self.sample_inpaint,
        }
        return samplers[request.task](request)
