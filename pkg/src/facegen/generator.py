"""Gradient-descent generation loop, guided-image mode and parameter sweeps."""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from facegen.color import color_transfer
from facegen.guided import guided_from_images
from facegen.losses import Objective

log = logging.getLogger(__name__)

INIT_MODES = ("blank-gray", "reference-copy", "seeded-noise")


class GenerationDiverged(RuntimeError):
    def __init__(self, iteration, last_good, reason):
        super().__init__(f"diverged at iteration {iteration}: {reason}")
        self.iteration = iteration
        self.last_good = last_good


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 1.0
    max_iters: int = 200
    convergence_window: int = 10
    convergence_rel_tol: float = 1e-4
    init: str = "blank-gray"
    seed: int = 0
    clamp_each_step: bool = True
    momentum: float = 0.0
    # abort when the total loss exceeds this multiple of the initial loss
    divergence_factor: float = 10.0
    color_samples: int = 1000
    color_region: float = 0.5

    def __post_init__(self):
        if not (np.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ValueError("learning_rate must be positive and finite")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 1 <= self.convergence_window <= self.max_iters:
            raise ValueError("convergence_window must be in [1, max_iters]")
        if self.init not in INIT_MODES:
            raise ValueError(f"init must be one of {INIT_MODES}")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")


class TraceRow(NamedTuple):
    iter: int
    total: float
    attr: float
    id: float
    tv: float
    sqerr: float


@dataclass
class GenerationResult:
    """Output of one run.

    ``trace`` has one row per objective evaluation, the first at the initial
    image and the last at ``raw_image``; ``steps`` counts the updates applied
    in between.
    """

    image: np.ndarray
    raw_image: np.ndarray
    trace: list
    converged: bool
    steps: int
    color_transform: object = None
    meta: dict = field(default_factory=dict)

    @property
    def iterations_run(self):
        return len(self.trace)

    @property
    def final_sqerr(self):
        return self.trace[-1].sqerr


def initialize_target(mode, dims, seed=0, ref=None):
    h, w = dims[:2]
    if mode == "blank-gray":
        return np.full((h, w, 3), 0.5)
    if mode == "seeded-noise":
        rng = np.random.default_rng(seed)
        return 0.5 + rng.uniform(-0.05, 0.05, size=(h, w, 3))
    if mode == "reference-copy":
        if ref is None:
            raise ValueError("reference-copy init needs the reference image")
        return np.array(ref, dtype=np.float64, copy=True)
    raise ValueError(f"unknown init mode {mode!r}")


def _ref_image(ref):
    return np.asarray(getattr(ref, "image", ref), dtype=np.float64)


def run_generation(net, obj_cfg, opt_cfg, guided, ref, mask=None, color=False):
    """Descend ``attr + lam*id + gamma*tv`` from the configured initial image.

    Stops when the total loss has dropped by less than ``convergence_rel_tol``
    (relative) over the last ``convergence_window`` steps, when the loss or
    gradient is exactly zero, or after ``max_iters`` steps.
    """
    ref_img = _ref_image(ref)
    objective = Objective(net, obj_cfg, guided, ref_img, mask)
    x = initialize_target(opt_cfg.init, ref_img.shape, opt_cfg.seed, ref_img)
    velocity = np.zeros_like(x)
    trace = []
    converged = False
    last_good = x.copy()
    lr, window, tol = opt_cfg.learning_rate, opt_cfg.convergence_window, opt_cfg.convergence_rel_tol

    for it in range(opt_cfg.max_iters + 1):
        value, grad, c = objective.value_and_grad(x)
        if not (np.isfinite(value) and np.all(np.isfinite(grad))):
            raise GenerationDiverged(it, last_good, "non-finite loss or gradient")
        d = x - ref_img
        trace.append(TraceRow(it, value, c["attr"], c["id"], c["tv"], float(np.sum(d * d))))
        initial = trace[0].total
        if initial > 0 and value > opt_cfg.divergence_factor * initial:
            raise GenerationDiverged(it, last_good, f"loss {value:.3g} exceeds "
                                     f"{opt_cfg.divergence_factor:g}x initial {initial:.3g}")
        last_good = x.copy()
        if value == 0.0 or not np.any(grad):
            converged = True
            break
        if len(trace) > window:
            old = trace[-1 - window].total
            if old - value < tol * old:
                converged = True
                break
        if it == opt_cfg.max_iters:
            break
        velocity = opt_cfg.momentum * velocity - lr * grad
        x = x + velocity
        if opt_cfg.clamp_each_step:
            np.clip(x, 0.0, 1.0, out=x)

    raw = last_good
    image, transform = raw, None
    if color:
        image, transform = color_transfer(raw, ref_img, opt_cfg.color_samples,
                                          opt_cfg.color_region, opt_cfg.seed)
    log.info("generation: %d steps, converged=%s, total %.6g -> %.6g",
             len(trace) - 1, converged, trace[0].total, trace[-1].total)
    return GenerationResult(image, raw, trace, converged, len(trace) - 1, transform)


def run_guided_image_mode(net, obj_cfg, opt_cfg, guided_images, ref, weights=None,
                          mask=None, color=False):
    """Generation with user-supplied guided images instead of corpus retrieval."""
    guided = guided_from_images(guided_images, weights)
    return run_generation(net, obj_cfg, opt_cfg, guided, ref, mask, color)


class SweepRow(NamedTuple):
    value: object
    sqerr: float
    tv: float
    result: GenerationResult


def _sweep_job(args):
    net, obj_cfg, opt_cfg, guided, ref, mask, color = args
    return run_generation(net, obj_cfg, opt_cfg, guided, ref, mask, color)


def _run_all(jobs, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_sweep_job, jobs))
    return [_sweep_job(j) for j in jobs]


def layer_sweep(net, obj_cfg, opt_cfg, guided, ref, layers, mask=None, color=False, workers=1):
    """One run per layer, all other settings fixed; rows carry final pixel error."""
    for name in layers:
        net.index(name)
    jobs = [(net, replace(obj_cfg, layer=name, id_layer=None), opt_cfg, guided, _ref_image(ref), mask, color)
            for name in layers]
    results = _run_all(jobs, workers)
    return [SweepRow(name, r.final_sqerr, r.trace[-1].tv, r) for name, r in zip(layers, results)]


def tv_sweep(net, obj_cfg, opt_cfg, guided, ref, gammas, mask=None, color=False, workers=1):
    """One run per TV weight; rows carry final pixel error and final TV value."""
    jobs = [(net, replace(obj_cfg, gamma=float(g)), opt_cfg, guided, _ref_image(ref), mask, color)
            for g in gammas]
    results = _run_all(jobs, workers)
    return [SweepRow(g, r.final_sqerr, r.trace[-1].tv, r) for g, r in zip(gammas, results)]
