"""Poisson likelihood over the latent space and the unadjusted Langevin chain.

The per-position detector rates are lam_j = |A_j G(z)|^2 with A_j the exit
operator from :mod:`ptybayes.physics` and G the complex generator. Up to the
count-factorial constant (omitted; it does not depend on z) the
log-likelihood is

    sum_j sum_m  f_jm * log(lam_jm) - lam_jm

with lam clamped from below by ``intensity_floor`` to keep the log and the
division finite at dark pixels. Its latent gradient accumulates the residual

    r_j = (A_j G(z)) * (f_j / max(lam_j, floor) - 1)

through the adjoint exit operator and the generator pullback (which carries
the 2*Re{...} convention, see :func:`ptybayes.generator.vjp_complex`).

One Langevin step is

    z' = z + gamma * (grad log-likelihood + grad log-prior) + sqrt(2*gamma) * eps

with a standard-normal latent prior (gradient -z) and eps ~ N(0, I).
:func:`ula_trajectory` exposes the bare recursion for an arbitrary
log-density gradient; this is the injectable path used to verify the sampler
against analytic Gaussian targets, and :func:`run_chain` goes through it.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergedError, ValidationError
from .generator import GeneratorModel, complex_with_tape
from .physics import DiffractionStack, Probe, ScanPlan, dft2, idft2


@dataclass
class ChainConfig:
    step_size: float = 1e-5
    n_iters: int = 1000
    burn_in: int = 500
    seed: int = 0
    intensity_floor: float = 1e-12

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValidationError("step_size must be positive")
        if self.n_iters < 1 or not 0 <= self.burn_in < self.n_iters:
            raise ValidationError("need 0 <= burn_in < n_iters")
        if self.intensity_floor <= 0:
            raise ValidationError("intensity_floor must be positive")


@dataclass(eq=False)
class ChainTrace:
    log_likelihood: np.ndarray
    grad_norm: np.ndarray


@dataclass(eq=False)
class PosteriorEnsemble:
    """Post-burn-in object samples with their summary maps.

    ``mean_object`` is the arithmetic mean of the complex samples;
    ``std_magnitude`` / ``std_phase`` are the per-pixel standard deviations
    of |sample| and arg(sample).
    """

    samples: np.ndarray
    mean_object: np.ndarray
    std_magnitude: np.ndarray
    std_phase: np.ndarray
    latents: np.ndarray | None = field(default=None)
    trace: ChainTrace | None = field(default=None)


def _frames_of(data) -> np.ndarray:
    """Accept a DiffractionStack or a raw (J, s, s) array of rates/counts."""
    if isinstance(data, DiffractionStack):
        return data.frames.astype(np.float64)
    frames = np.asarray(data, dtype=np.float64)
    if frames.ndim != 3:
        raise ValidationError("geometry mismatch: frames must be (J, side, side)")
    return frames


def _ll_and_grad(z, frames, probe: Probe, plan: ScanPlan, model: GeneratorModel,
                 floor: float, want_grad: bool = True):
    if frames.shape[0] != plan.n_positions:
        raise ValidationError("data/plan mismatch")
    if probe.side != plan.patch_size or frames.shape[1] != plan.patch_size:
        raise ValidationError("geometry mismatch: probe/frames/plan disagree")
    u, pullback = complex_with_tape(model, z)
    if u.shape != (plan.object_size, plan.object_size):
        raise ValidationError("geometry mismatch: generator output != object grid")
    s = plan.patch_size
    loglik = 0.0
    acc = np.zeros_like(u) if want_grad else None
    for j in range(plan.n_positions):
        r, c = plan.anchors[j]
        psi = dft2(probe.field * u[r:r + s, c:c + s])
        lam = np.maximum(psi.real ** 2 + psi.imag ** 2, floor)
        loglik += float(np.sum(frames[j] * np.log(lam) - lam))
        if want_grad:
            resid = psi * (frames[j] / lam - 1.0)
            acc[r:r + s, c:c + s] += np.conj(probe.field) * idft2(resid)
    if not want_grad:
        return loglik, None
    return loglik, pullback(acc)


def log_likelihood(z, data, probe: Probe, plan: ScanPlan, model: GeneratorModel,
                   intensity_floor: float = 1e-12) -> float:
    """Poisson log-likelihood of the data at latent z (factorial term omitted)."""
    ll, _ = _ll_and_grad(np.asarray(z, dtype=np.float64), _frames_of(data),
                         probe, plan, model, intensity_floor, want_grad=False)
    return ll


def grad_log_likelihood(z, data, probe: Probe, plan: ScanPlan,
                        model: GeneratorModel,
                        intensity_floor: float = 1e-12) -> np.ndarray:
    """Latent gradient of :func:`log_likelihood`, length 2Z."""
    _, g = _ll_and_grad(np.asarray(z, dtype=np.float64), _frames_of(data),
                        probe, plan, model, intensity_floor)
    return g


def grad_log_prior(z) -> np.ndarray:
    """Standard-normal latent prior: grad log p(z) = -z."""
    return -np.asarray(z, dtype=np.float64)


def ula_step(z, data, probe: Probe, plan: ScanPlan, model: GeneratorModel,
             cfg: ChainConfig, rng: np.random.Generator) -> np.ndarray:
    """One Langevin update against the ptychographic posterior."""
    z = np.asarray(z, dtype=np.float64)
    grad = grad_log_likelihood(z, data, probe, plan, model,
                               cfg.intensity_floor) + grad_log_prior(z)
    if not np.all(np.isfinite(grad)):
        raise DivergedError("diverged: non-finite posterior gradient")
    eps = rng.standard_normal(z.shape)
    return z + cfg.step_size * grad + np.sqrt(2.0 * cfg.step_size) * eps


def ula_trajectory(z0, grad_log_density, cfg: ChainConfig,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """Run the bare Langevin recursion for an arbitrary log-density gradient.

    Returns the full (n_iters, *z0.shape) trajectory of post-update states.
    ``z0`` may be batched, e.g. (n_chains, dim): every row then evolves as an
    independent chain driven by the shared seeded stream. This is the
    injectable-target path used to verify stationary statistics.
    """
    z = np.array(z0, dtype=np.float64)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    gamma = cfg.step_size
    noise_scale = np.sqrt(2.0 * gamma)
    out = np.empty((cfg.n_iters,) + z.shape)
    for k in range(cfg.n_iters):
        grad = np.asarray(grad_log_density(z), dtype=np.float64)
        if not np.all(np.isfinite(grad)):
            raise DivergedError(f"diverged: non-finite gradient at iteration {k}")
        z = z + gamma * grad + noise_scale * rng.standard_normal(z.shape)
        out[k] = z
    return out


def run_chain(z0, data, probe: Probe | None, plan: ScanPlan | None,
              model: GeneratorModel, cfg: ChainConfig,
              log_density_grad=None) -> PosteriorEnsemble:
    """Sample the posterior and assemble the ensemble statistics.

    Runs ``cfg.n_iters`` Langevin steps from ``z0``, maps the post-burn-in
    latents through the complex generator, and reduces them to the mean
    object and the per-pixel magnitude/phase standard deviations (no
    thinning; phase statistics use the principal value, which is exact for
    objects whose phase stays inside (-pi, pi)).

    ``log_density_grad``, when given, replaces the posterior gradient
    entirely (verification targets); data/probe/plan are then unused.
    """
    z = np.asarray(z0, dtype=np.float64)
    rng = np.random.default_rng(cfg.seed)
    frames = None
    if log_density_grad is None:
        frames = _frames_of(data)
    gamma = cfg.step_size
    noise_scale = np.sqrt(2.0 * gamma)
    n_keep = cfg.n_iters - cfg.burn_in
    latents = np.empty((n_keep, z.size))
    loglik_trace = np.full(cfg.n_iters, np.nan)
    grad_norm_trace = np.empty(cfg.n_iters)
    for k in range(cfg.n_iters):
        if log_density_grad is None:
            ll, grad = _ll_and_grad(z, frames, probe, plan, model,
                                    cfg.intensity_floor)
            grad = grad + grad_log_prior(z)
            loglik_trace[k] = ll
        else:
            grad = np.asarray(log_density_grad(z), dtype=np.float64)
        if not np.all(np.isfinite(grad)):
            raise DivergedError(f"diverged: non-finite gradient at iteration {k}")
        grad_norm_trace[k] = float(np.linalg.norm(grad))
        z = z + gamma * grad + noise_scale * rng.standard_normal(z.shape)
        if k >= cfg.burn_in:
            latents[k - cfg.burn_in] = z
    side = model.output_side
    samples = np.empty((n_keep, side, side), dtype=np.complex128)
    for i in range(n_keep):
        u, _ = complex_with_tape(model, latents[i])
        samples[i] = u
    mean_object = samples.mean(axis=0)
    std_magnitude = np.abs(samples).std(axis=0)
    std_phase = np.angle(samples).std(axis=0)
    return PosteriorEnsemble(samples=samples, mean_object=mean_object,
                             std_magnitude=std_magnitude, std_phase=std_phase,
                             latents=latents,
                             trace=ChainTrace(loglik_trace, grad_norm_trace))


def init_latent(model: GeneratorModel, n_iters: int = 500,
                step_size: float = 1e-2) -> tuple[np.ndarray, float]:
    """Latent start close to free space (unit magnitude, zero phase).

    Fixed-step gradient descent on ||G(z) - 1||^2 from z = 0; steps that
    would increase the objective are rejected, so the objective is
    non-increasing across accepted iterations. Returns (z, final objective).
    """
    z = np.zeros(2 * model.latent_dim)

    def objective_and_grad(z):
        u, pullback = complex_with_tape(model, z)
        resid = u - 1.0
        obj = float(np.sum(resid.real ** 2 + resid.imag ** 2))
        return obj, pullback(resid)

    obj, grad = objective_and_grad(z)
    for _ in range(n_iters):
        trial = z - step_size * grad
        trial_obj, trial_grad = objective_and_grad(trial)
        if not np.isfinite(trial_obj):
            raise DivergedError("diverged: free-space initialization")
        if trial_obj <= obj:
            z, obj, grad = trial, trial_obj, trial_grad
    return z, obj


def chain_runtime(fn, *args, **kwargs):
    """Run fn and return (result, wall seconds); used by the benchmark."""
    t0 = time.perf_counter()
    result = fn(*args, **kwargs)
    return result, time.perf_counter() - t0
