"""
Caption Generation

Greedy, sampling and beam-search decoding from BOS until EOS or max_len, plus
teacher-forced scoring of a given caption. Every emitted token, EOS
included, has one AttentionTrace entry. When max_len is reached EOS is
emitted in place of the predicted word.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from modules.attention import AnnotationGrid, AttentionTrace, AttentionWeights, DimensionMismatchError

from .cell import HARD, MODES, SOFT, DecoderSession
from .params import DecoderParams
from .sequence import BOS, EOS, CaptionSequence

logger = logging.getLogger(__name__)

GREEDY = "greedy"
BEAM = "beam"
SAMPLE = "sample"
STRATEGIES = (GREEDY, BEAM, SAMPLE)


@dataclass
class _Hypothesis:
    tokens: List[int]
    log_prob: float
    h: np.ndarray
    c: np.ndarray
    alphas: List[np.ndarray] = field(default_factory=list)
    locations: List[int] = field(default_factory=list)
    betas: List[float] = field(default_factory=list)

    @property
    def finished(self) -> bool:
        return bool(self.tokens) and self.tokens[-1] == EOS


def _check_grid(grid: AnnotationGrid, params: DecoderParams) -> None:
    if grid.D != params.dims.D:
        raise DimensionMismatchError(f"Grid has D={grid.D}, checkpoint expects D={params.dims.D}")


def _contexts(session: DecoderSession, attended: dict, mode: str, rows: np.ndarray,
              sample_attention: bool, rng: Optional[np.random.Generator]):
    """Context rows plus the chosen locations (hard) or betas (soft)."""
    weights = attended["weights"][..., 0]
    if mode == SOFT:
        betas = attended["beta"].reshape(-1) if "beta" in attended else np.ones(len(rows))
        return attended["context"], None, betas
    if sample_attention:
        locations = np.array([int(rng.choice(weights.shape[-1], p=w)) for w in weights])
    else:
        locations = np.argmax(weights, axis=-1)
    return session.hard_context(locations, rows), locations, None


def _trace(hypothesis: _Hypothesis, mode: str) -> AttentionTrace:
    return AttentionTrace(
        per_step=[AttentionWeights(alpha) for alpha in hypothesis.alphas],
        sampled_locations=list(hypothesis.locations) if mode == HARD else None,
        betas=list(hypothesis.betas) if mode == SOFT else None,
    )


def generate(
    grid: AnnotationGrid,
    params: DecoderParams,
    mode: str = SOFT,
    strategy: str = GREEDY,
    max_len: int = 12,
    rng: Optional[np.random.Generator] = None,
    beam_width: int = 3,
    temperature: float = 1.0,
    sample_attention: bool = False,
    gate: bool = True
) -> Tuple[CaptionSequence, AttentionTrace]:
    """
    Decode one caption.

    Args:
        grid: Annotation vectors of the image
        params: Decoder parameters
        mode: "soft" or "hard" attention
        strategy: "greedy", "beam" or "sample"
        max_len: Maximum number of emitted tokens including EOS (>= 1)
        rng: Required for the sample strategy and for sample_attention
        beam_width: Beam size for the beam strategy
        temperature: Sampling temperature for the sample strategy
        sample_attention: Hard mode draws locations from alpha instead of
            taking the argmax
        gate: Soft mode only; False fixes beta to 1

    Returns:
        (CaptionSequence, AttentionTrace) with len(trace) == caption.C
    """
    if mode not in MODES:
        raise ValueError(f"Unknown attention mode '{mode}'")
    if strategy not in STRATEGIES:
        raise ValueError(f"Unknown decoding strategy '{strategy}'")
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    if (strategy == SAMPLE or (sample_attention and mode == HARD)) and rng is None:
        raise ValueError("A random generator is required for sampling")
    if strategy == SAMPLE and temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    _check_grid(grid, params)

    session = DecoderSession(params, grid.features[np.newaxis], gate=gate)
    width = beam_width if strategy == BEAM else 1
    if width < 1:
        raise ValueError(f"beam_width must be >= 1, got {width}")

    beams = [_Hypothesis([], 0.0, session.h0, session.c0)]
    for t in range(max_len):
        alive = [hyp for hyp in beams if not hyp.finished]
        if not alive:
            break
        rows = np.zeros(len(alive), dtype=np.int64)
        h = np.concatenate([hyp.h for hyp in alive])
        c = np.concatenate([hyp.c for hyp in alive])
        attended = session.attend(h, rows)
        context, locations, betas = _contexts(session, attended, mode, rows, sample_attention, rng)
        prev = np.array([hyp.tokens[-1] if hyp.tokens else BOS for hyp in alive])
        out = session.step(prev, h, c, context)
        probs = out["probs"][:, 0, :]

        last_step = t == max_len - 1
        candidates: List[_Hypothesis] = [hyp for hyp in beams if hyp.finished]
        for r, hyp in enumerate(alive):
            log_probs = np.log(probs[r])
            if last_step:
                choices = [EOS]
            elif strategy == SAMPLE:
                scaled = np.exp((log_probs - log_probs.max()) / temperature)
                choices = [int(rng.choice(len(scaled), p=scaled / scaled.sum()))]
            elif strategy == GREEDY:
                choices = [int(np.argmax(probs[r]))]
            else:
                choices = [int(k) for k in np.argsort(-log_probs, kind="stable")[:width]]
            for token in choices:
                candidates.append(_Hypothesis(
                    tokens=hyp.tokens + [token],
                    log_prob=hyp.log_prob + float(log_probs[token]),
                    h=out["h"][r:r + 1],
                    c=out["c"][r:r + 1],
                    alphas=hyp.alphas + [attended["weights"][r, :, 0]],
                    locations=hyp.locations + ([int(locations[r])] if locations is not None else []),
                    betas=hyp.betas + ([float(betas[r])] if betas is not None else []),
                ))
        if strategy == BEAM:
            order = sorted(range(len(candidates)), key=lambda i: -candidates[i].log_prob)
            beams = [candidates[i] for i in order[:width]]
        else:
            beams = candidates

    best = max(beams, key=lambda hyp: hyp.log_prob) if strategy == BEAM else beams[0]
    return CaptionSequence(tuple(best.tokens)), _trace(best, mode)


def teacher_forced_log_likelihood(
    grid: AnnotationGrid,
    caption: CaptionSequence,
    params: DecoderParams,
    mode: str = SOFT,
    locations: Optional[Sequence[int]] = None,
    gate: bool = True
) -> Tuple[np.ndarray, AttentionTrace]:
    """
    Score a caption by feeding the observed previous words.

    Args:
        grid: Annotation vectors
        caption: Observed caption
        params: Decoder parameters
        mode: "soft" or "hard"
        locations: Hard mode attended location per step; argmax when omitted
        gate: Soft mode only; False fixes beta to 1

    Returns:
        (per-step log p(y_t | y_<t, a) of length C, attention trace)
    """
    if mode not in MODES:
        raise ValueError(f"Unknown attention mode '{mode}'")
    _check_grid(grid, params)
    caption.check_vocabulary(params.dims.K)
    if locations is not None and len(locations) != caption.C:
        raise ValueError(f"{len(locations)} locations for a caption of length {caption.C}")

    session = DecoderSession(params, grid.features[np.newaxis], gate=gate)
    h, c = session.h0, session.c0
    rows = np.zeros(1, dtype=np.int64)
    log_probs = np.zeros(caption.C)
    hyp = _Hypothesis([], 0.0, h, c)
    for t, (prev, target) in enumerate(zip(caption.previous, caption.tokens)):
        attended = session.attend(h, rows)
        if mode == HARD and locations is not None:
            chosen = np.array([int(locations[t])])
            context, betas = session.hard_context(chosen, rows), None
        else:
            context, chosen, betas = _contexts(session, attended, mode, rows, False, None)
        out = session.step(np.array([prev]), h, c, context)
        h, c = out["h"], out["c"]
        log_probs[t] = float(np.log(out["probs"][0, 0, target]))
        hyp.alphas.append(attended["weights"][0, :, 0])
        if chosen is not None:
            hyp.locations.append(int(chosen[0]))
        if betas is not None:
            hyp.betas.append(float(betas[0]))
    return log_probs, _trace(hyp, mode)


def generate_batch(
    features: np.ndarray,
    params: DecoderParams,
    mode: str = SOFT,
    max_len: int = 12,
    gate: bool = True
) -> List[CaptionSequence]:
    """
    Greedy captions for a batch of grids [B, L, D], decoded in lock-step.

    Hard mode attends to the argmax location. Used for validation, where the
    per-caption traces are not needed.
    """
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    session = DecoderSession(params, features, gate=gate)
    B = session.batch_size
    tokens: List[List[int]] = [[] for _ in range(B)]
    alive = np.arange(B)
    h, c = session.h0, session.c0
    prev = np.full(B, BOS)
    for t in range(max_len):
        if alive.size == 0:
            break
        attended = session.attend(h, alive)
        context, _, _ = _contexts(session, attended, mode, alive, False, None)
        out = session.step(prev, h, c, context)
        chosen = np.argmax(out["probs"][:, 0, :], axis=-1)
        if t == max_len - 1:
            chosen = np.full_like(chosen, EOS)
        for r, b in enumerate(alive):
            tokens[b].append(int(chosen[r]))
        keep = chosen != EOS
        alive, prev = alive[keep], chosen[keep]
        h, c = out["h"][keep], out["c"][keep]
    return [CaptionSequence(tuple(seq)) for seq in tokens]
