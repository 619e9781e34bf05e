"""Toy-scale gradient-matching sequence reconstruction.

The decoder is a single frozen projection layer, so the synthesized weight
gradient has the closed form

    D(A, P) = A^T (softmax(A W + b) - P~)

where A holds one free context vector per sequence position and P~ is the
smooth-label matrix expanded to all C classes (zeros outside the restricted
label set when one is supplied).  Reconstruction minimizes

    || D(A, P) - target ||_F^2  +  lam * R(P),    R(P) = sum_i | ||p_i||_1 - 1 |,

by plain gradient descent from small random starts; the squared distance is
optimized for smooth gradients while results report the plain Frobenius
distance.  Restricting P's columns to a recovered label set shrinks the
search from S*(d_A + C) to S*(d_A + |set|) variables and is the whole point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .linalg import as_matrix
from .metrics import wer
from .simulator import _softmax_rows


@dataclass(frozen=True)
class ToyDecoder:
    """Frozen projection weights standing in for the decoder.

    `pos`, when present, is a per-position logit offset (rows indexed by
    sequence position) added on top of the shared bias.  It stands in for
    the step-dependent state a real autoregressive decoder carries and is
    what makes token ORDER recoverable: without it the matching objective
    is exactly invariant under permuting sequence positions, so only the
    multiset of labels could ever be identified.
    """

    w: np.ndarray  # d_a x C
    b: np.ndarray  # C
    pos: Optional[np.ndarray] = None  # max_len x C

    def __post_init__(self):
        w = as_matrix(self.w, "decoder weights")
        b = np.ascontiguousarray(self.b, dtype=np.float64)
        if b.ndim != 1 or b.shape[0] != w.shape[1]:
            raise ValueError(f"decoder bias must be 1-D of length {w.shape[1]}")
        if not np.isfinite(b).all():
            raise ValueError("decoder bias contains non-finite entries")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", b)
        if self.pos is not None:
            pos = as_matrix(self.pos, "decoder positional offsets")
            if pos.shape[1] != w.shape[1]:
                raise ValueError("positional offsets must have one column per class")
            object.__setattr__(self, "pos", pos)

    @property
    def d_a(self) -> int:
        return self.w.shape[0]

    @property
    def classes(self) -> int:
        return self.w.shape[1]

    def logits(self, a: np.ndarray) -> np.ndarray:
        z = a @ self.w + self.b
        if self.pos is not None:
            if a.shape[0] > self.pos.shape[0]:
                raise ValueError(f"decoder supports sequences up to {self.pos.shape[0]}, "
                                 f"got {a.shape[0]}")
            z = z + self.pos[:a.shape[0]]
        return z


@dataclass(frozen=True)
class GMProblem:
    """One reconstruction instance: target gradient, frozen decoder, length,
    optional restricted label set, and the descent schedule."""

    target_grad: np.ndarray
    decoder: ToyDecoder
    s: int
    bow: Optional[tuple[int, ...]] = None
    lam: float = 1.0
    lr_init: float = 0.05
    lr_halve_every: int = 4000
    lr_floor: float = 0.005
    stable_steps: int = 2000
    max_steps: int = 50000

    def __post_init__(self):
        t = as_matrix(self.target_grad, "target_grad")
        if t.shape != self.decoder.w.shape:
            raise ValueError(f"target gradient shape {t.shape} must match decoder {self.decoder.w.shape}")
        object.__setattr__(self, "target_grad", t)
        if self.s < 1:
            raise ValueError("sequence length must be >= 1")
        if self.lam < 0.0:
            raise ValueError("regularization weight must be >= 0")
        if self.bow is not None:
            bow = tuple(int(c) for c in self.bow)
            if not bow:
                raise ValueError("restricted label set must be non-empty when present")
            if any(c < 0 or c >= self.decoder.classes for c in bow):
                raise ValueError("restricted label set out of range")
            if len(set(bow)) != len(bow):
                raise ValueError("restricted label set must not repeat labels")
            object.__setattr__(self, "bow", bow)

    @property
    def width(self) -> int:
        return len(self.bow) if self.bow is not None else self.decoder.classes

    @property
    def n_vars(self) -> int:
        return self.s * (self.decoder.d_a + self.width)


@dataclass(frozen=True)
class GMResult:
    """Reconstructed transcript with bookkeeping.

    final_loss is the plain (unsquared) Frobenius gradient distance of the
    kept restart; objective adds the weighted regularizer to the squared
    distance.  n_vars records the optimized search-space size.
    """

    transcript: tuple[int, ...]
    final_loss: float
    steps: int
    wer_vs_truth: Optional[float]
    exact_match: Optional[bool]
    n_vars: int
    converged: bool
    restarts: int
    objective: float


def smooth_label_loss(a, p, dec: ToyDecoder, bow: Optional[Sequence[int]] = None) -> float:
    """Cross-entropy against smooth (non-one-hot) label rows.

    With a restricted label set, only the kept columns carry coefficients;
    the log-normalizer still runs over all classes.
    """
    a = as_matrix(a, "context vectors")
    p = as_matrix(p, "smooth labels")
    z = dec.logits(a)
    logp = z - z.max(axis=1, keepdims=True)
    logp -= np.log(np.exp(logp).sum(axis=1, keepdims=True))
    if bow is not None:
        cols = np.asarray(list(bow), dtype=np.int64)
        if p.shape != (a.shape[0], cols.size):
            raise ValueError(f"smooth labels must be {a.shape[0]} x {cols.size}")
        return float(-(p * logp[:, cols]).sum())
    if p.shape != z.shape:
        raise ValueError(f"smooth labels must be {z.shape[0]} x {z.shape[1]}")
    return float(-(p * logp).sum())


def _expand(p: np.ndarray, prob: GMProblem) -> np.ndarray:
    if prob.bow is None:
        return p
    full = np.zeros((p.shape[0], prob.decoder.classes))
    full[:, list(prob.bow)] = p
    return full


def decoder_gradient(a, p, dec: ToyDecoder, bow: Optional[Sequence[int]] = None) -> np.ndarray:
    """Synthesized decoder weight gradient A^T (softmax(AW + b) - P~)."""
    a = as_matrix(a, "context vectors")
    p = as_matrix(p, "smooth labels")
    resid = _softmax_rows(dec.logits(a))
    if bow is not None:
        cols = np.asarray(list(bow), dtype=np.int64)
        resid = resid.copy()
        resid[:, cols] -= p
    else:
        resid = resid - p
    return a.T @ resid


def regularizer(p) -> float:
    """Sum over rows of | ||p_i||_1 - 1 |; zero exactly on unit-L1 rows."""
    p = as_matrix(p, "smooth labels")
    return float(np.abs(np.abs(p).sum(axis=1) - 1.0).sum())


def gm_objective(a, p, prob: GMProblem) -> float:
    """Squared Frobenius gradient distance plus lam * R(P).

    The ground-truth pair (context vectors, one-hot rows) that generated the
    target is a global minimizer with value 0.
    """
    diff = decoder_gradient(a, p, prob.decoder, prob.bow) - prob.target_grad
    return float((diff * diff).sum()) + prob.lam * regularizer(p)


def gm_gradients(a, p, prob: GMProblem) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of :func:`gm_objective` w.r.t. A and P.

    Derivation: with M = softmax(Z) - P~ and E = A^T M - target, the distance
    term contributes 2 (M E^T + G W^T) to dA where G applies the per-row
    softmax Jacobian to A E, and -2 A E (restricted to kept columns) to dP.
    The regularizer contributes its subgradient lam * sign(||p_i||_1 - 1) *
    sign(p_ij).
    """
    a = as_matrix(a, "context vectors")
    p = as_matrix(p, "smooth labels")
    w = prob.decoder.w
    sm = _softmax_rows(prob.decoder.logits(a))
    m = sm - _expand(p, prob)
    e = a.T @ m - prob.target_grad
    ae = a @ e
    row_dot = (ae * sm).sum(axis=1, keepdims=True)
    jac = sm * (ae - row_dot)
    grad_a = 2.0 * (m @ e.T + jac @ w.T)
    grad_p_full = -2.0 * ae
    grad_p = grad_p_full[:, list(prob.bow)] if prob.bow is not None else grad_p_full
    reg = prob.lam * np.sign(np.abs(p).sum(axis=1, keepdims=True) - 1.0) * np.sign(p)
    return grad_a, grad_p + reg


def make_problem(decoder: ToyDecoder, context: np.ndarray, labels: Sequence[int],
                 *, bow: Optional[Sequence[int]] = None, lam: float = 1.0,
                 **overrides) -> GMProblem:
    """Build an instance whose target is generated from known ground truth."""
    labels = [int(y) for y in labels]
    onehot = np.zeros((len(labels), decoder.classes))
    onehot[np.arange(len(labels)), labels] = 1.0
    target = decoder_gradient(context, onehot, decoder)
    return GMProblem(target_grad=target, decoder=decoder, s=len(labels),
                     bow=tuple(bow) if bow is not None else None, lam=lam, **overrides)


def _transcript(p: np.ndarray, prob: GMProblem) -> tuple[int, ...]:
    idx = p.argmax(axis=1)
    if prob.bow is not None:
        return tuple(prob.bow[int(i)] for i in idx)
    return tuple(int(i) for i in idx)


def _single_run(prob: GMProblem, rng: np.random.Generator):
    a = rng.normal(0.0, 0.01, size=(prob.s, prob.decoder.d_a))
    p = rng.normal(0.0, 0.01, size=(prob.s, prob.width))
    transcript = _transcript(p, prob)
    last_change = 0
    converged = False
    step = 0
    for step in range(1, prob.max_steps + 1):
        lr = max(prob.lr_floor, prob.lr_init * 0.5 ** ((step - 1) // prob.lr_halve_every))
        with np.errstate(over="ignore", invalid="ignore"):
            ga, gp = gm_gradients(a, p, prob)
            a -= lr * ga
            p -= lr * gp
        if not (np.isfinite(a).all() and np.isfinite(p).all()):
            # diverged run: report it as non-converged with infinite distance
            # so any finite restart beats it
            return transcript, float("inf"), float("inf"), step, False
        current = _transcript(p, prob)
        if current != transcript:
            transcript = current
            last_change = step
        if step - last_change >= prob.stable_steps:
            converged = True
            break
    diff = decoder_gradient(a, p, prob.decoder, prob.bow) - prob.target_grad
    distance = float(np.sqrt((diff * diff).sum()))
    objective = distance * distance + prob.lam * regularizer(p)
    return transcript, distance, objective, step, converged


def reconstruct(prob: GMProblem, seed: int = 0, *, restarts: int = 1,
                truth: Optional[Sequence[int]] = None) -> GMResult:
    """Gradient-descent reconstruction with independent restarts.

    Restart r runs on the seed's Philox stream jumped r blocks, so restarts
    are reproducible and order-independent; the restart with the lowest
    final gradient distance wins.  A run that exhausts the step cap without
    the transcript stabilizing is flagged non-converged but still returned.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    best = None
    for ridx in range(restarts):
        rng = np.random.Generator(np.random.Philox(key=seed).jumped(ridx))
        outcome = _single_run(prob, rng)
        if best is None or outcome[1] < best[1]:
            best = outcome
    transcript, distance, objective, steps, converged = best
    wer_value = None
    em = None
    if truth is not None:
        truth_seq = [int(y) for y in truth]
        wer_value = wer(truth_seq, list(transcript))
        em = tuple(truth_seq) == transcript
    return GMResult(transcript=transcript, final_loss=distance, steps=steps,
                    wer_vs_truth=wer_value, exact_match=em, n_vars=prob.n_vars,
                    converged=converged, restarts=restarts, objective=objective)
