"""Wasserstein GAN training with gradient penalty.

Standard recipe: the critic maximizes D(real) - D(fake) regularized by the
two-sided gradient penalty lambda * (||grad D(x_hat)||_2 - 1)^2 on random
interpolates, several critic steps per generator step, Adam for both nets.
Losses are logged per generator step; non-finite losses abort the run.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import autograd

from .models import Critic, Generator


@dataclass
class TrainConfig:
    latent_dim: int = 64
    base_channels: int = 64
    critic_channels: int = 32
    output_side: int = 64
    epochs: int = 30
    batch_size: int = 64
    gp_weight: float = 10.0
    critic_steps: int = 5
    lr: float = 1e-4
    betas: tuple[float, float] = (0.5, 0.9)
    seed: int = 0
    log_path: str | None = None
    checkpoint_path: str | None = None
    snapshot_every: int = 0  # generator steps between extra checkpoints
    history: list = field(default_factory=list, repr=False)


def gradient_penalty(critic: Critic, real: torch.Tensor, fake: torch.Tensor,
                     gen: torch.Generator) -> torch.Tensor:
    eps = torch.rand((real.shape[0], 1, 1, 1), generator=gen)
    mixed = (eps * real + (1.0 - eps) * fake).requires_grad_(True)
    scores = critic(mixed)
    grads = autograd.grad(scores.sum(), mixed, create_graph=True)[0]
    norms = grads.flatten(1).norm(dim=1)
    return ((norms - 1.0) ** 2).mean()


def train(images: torch.Tensor, cfg: TrainConfig) -> Generator:
    """Run WGAN-GP on a preprocessed (n, 1, s, s) image tensor."""
    torch.manual_seed(cfg.seed)
    gen_rng = torch.Generator().manual_seed(cfg.seed + 1)
    shuffler = np.random.default_rng(cfg.seed + 2)

    generator = Generator(cfg.latent_dim, cfg.base_channels, cfg.output_side)
    critic = Critic(cfg.critic_channels, cfg.output_side)
    opt_g = torch.optim.Adam(generator.parameters(), lr=cfg.lr, betas=cfg.betas)
    opt_c = torch.optim.Adam(critic.parameters(), lr=cfg.lr, betas=cfg.betas)

    n = images.shape[0]
    steps_per_epoch = max(n // (cfg.batch_size * cfg.critic_steps), 1)
    log_rows = []
    log_file = None
    log_writer = None
    if cfg.log_path:
        log_file = open(cfg.log_path, "w", newline="")
        log_writer = csv.writer(log_file)
        log_writer.writerow(("gen_step", "epoch", "critic_loss",
                             "generator_loss"))
    gen_step = 0
    for epoch in range(cfg.epochs):
        order = shuffler.permutation(n)
        cursor = 0

        def next_batch():
            nonlocal cursor
            if cursor + cfg.batch_size > n:
                cursor = 0
            batch = images[order[cursor:cursor + cfg.batch_size]]
            cursor += cfg.batch_size
            return batch

        for _ in range(steps_per_epoch):
            for _ in range(cfg.critic_steps):
                real = next_batch()
                z = torch.randn((real.shape[0], cfg.latent_dim),
                                generator=gen_rng)
                fake = generator(z).detach()
                loss_c = (critic(fake).mean() - critic(real).mean()
                          + cfg.gp_weight * gradient_penalty(critic, real,
                                                             fake, gen_rng))
                opt_c.zero_grad(set_to_none=True)
                loss_c.backward()
                opt_c.step()

            z = torch.randn((cfg.batch_size, cfg.latent_dim), generator=gen_rng)
            loss_g = -critic(generator(z)).mean()
            opt_g.zero_grad(set_to_none=True)
            loss_g.backward()
            opt_g.step()
            gen_step += 1

            lc, lg = loss_c.item(), loss_g.item()
            if not (np.isfinite(lc) and np.isfinite(lg)):
                if log_file:
                    log_file.close()
                raise RuntimeError(
                    f"diverged: non-finite loss at generator step {gen_step}")
            log_rows.append((gen_step, epoch, lc, lg))
            if log_writer:
                log_writer.writerow((gen_step, epoch, f"{lc:.6f}", f"{lg:.6f}"))
                log_file.flush()
            if (cfg.snapshot_every and cfg.checkpoint_path
                    and gen_step % cfg.snapshot_every == 0):
                torch.save(generator.state_dict(), cfg.checkpoint_path)

    cfg.history = log_rows
    if log_file:
        log_file.close()
    if cfg.checkpoint_path:
        Path(cfg.checkpoint_path).parent.mkdir(parents=True, exist_ok=True)
        torch.save(generator.state_dict(), cfg.checkpoint_path)
    generator.eval()
    return generator
