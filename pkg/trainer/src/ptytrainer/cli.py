"""Train the object prior and export it for the engine.

Example:
    ptytrain --idx ../assets/digits_train.idx --epochs 40 \
        --export ../models/prior_digits.pgen --log train_log.csv
"""

from __future__ import annotations

import argparse
import time
from pathlib import Path

from .data import load_training_images
from .export import export_pgen
from .wgan import TrainConfig, train


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--idx", required=True, help="IDX training images")
    parser.add_argument("--export", required=True, help="output PGEN path")
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--batch-size", type=int, default=64)
    parser.add_argument("--latent-dim", type=int, default=64)
    parser.add_argument("--base-channels", type=int, default=64)
    parser.add_argument("--critic-channels", type=int, default=32)
    parser.add_argument("--gp-weight", type=float, default=10.0)
    parser.add_argument("--critic-steps", type=int, default=5)
    parser.add_argument("--lr", type=float, default=1e-4)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--log", help="loss CSV path")
    parser.add_argument("--checkpoint", help="torch state-dict path")
    parser.add_argument("--snapshot-every", type=int, default=0,
                        help="checkpoint every N generator steps")
    args = parser.parse_args(argv)

    images = load_training_images(args.idx)
    cfg = TrainConfig(latent_dim=args.latent_dim,
                      base_channels=args.base_channels,
                      critic_channels=args.critic_channels,
                      epochs=args.epochs, batch_size=args.batch_size,
                      gp_weight=args.gp_weight,
                      critic_steps=args.critic_steps, lr=args.lr,
                      seed=args.seed, log_path=args.log,
                      checkpoint_path=args.checkpoint,
                      snapshot_every=args.snapshot_every)
    t0 = time.perf_counter()
    generator = train(images, cfg)
    elapsed = time.perf_counter() - t0

    out = Path(args.export)
    out.parent.mkdir(parents=True, exist_ok=True)
    export_pgen(generator, out)
    manifest = out.with_suffix(".manifest")
    manifest.write_text(
        "[run]\ncommand = train\n"
        f"trainer_version = 0.1.0\n"
        f"wall_clock_s = {elapsed:.1f}\n"
        f"n_images = {images.shape[0]}\n"
        + "".join(f"{k} = {v}\n" for k, v in vars(args).items()))
    print(f"trained {cfg.epochs} epochs in {elapsed:.0f}s; wrote {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
