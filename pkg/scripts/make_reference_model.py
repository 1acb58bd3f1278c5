#!/usr/bin/env python3
"""Write a randomly initialized reference generator (PGEN).

Useful for smoke-testing the sampling pipeline without a trained prior:
Z=64 latent, dense to 4x4x128, four transposed-conv doublings to 64x64,
sigmoid output.
"""

import argparse

from ptybayes.generator import reference_generator, save_model


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out", help="output .pgen path")
    parser.add_argument("--latent-dim", type=int, default=64)
    parser.add_argument("--base-channels", type=int, default=128)
    parser.add_argument("--output-side", type=int, default=64)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    model = reference_generator(args.latent_dim, args.base_channels,
                                args.output_side, args.seed)
    save_model(model, args.out)
    print(f"wrote {args.out} (Z={args.latent_dim}, side={model.output_side})")


if __name__ == "__main__":
    main()
