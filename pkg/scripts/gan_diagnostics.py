"""Train LGIR once and report how the generator moves low-quality user vectors.

    python scripts/gan_diagnostics.py --seed 0 --k 10 --gan-lr 1e-3
"""

import argparse

import numpy as np

from jobrec.experiments import prepare_synthetic, run_modes


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--k", type=int, default=10, help="C, D and G steps per epoch")
    ap.add_argument("--gan-lr", type=float, default=1e-3)
    ap.add_argument("--users", type=int, default=400)
    ap.add_argument("--jobs", type=int, default=300)
    args = ap.parse_args()

    prep = prepare_synthetic(args.seed, args.users, args.jobs, modes=("lgir",))
    print(f"few-shot users (<= 5 train jobs): {np.mean(prep.store.shot_counts('train') <= 5):.1%}")
    res = run_modes(prep, args.seed, ("lgir",), k_C=args.k, k_D=args.k, k_G=args.k, gan_lr=args.gan_lr)["lgir"]
    gan = res.train.gan
    print(f"classifier held-out accuracy: {gan.get('holdout_accuracy', float('nan')):.3f}")
    print(f"pools: {gan.get('pools')}")
    if "before" not in gan:
        print(f"adversarial phases skipped: {gan.get('skipped')}")
        return
    for key in ("d_hq_mean", "d_fake_mean", "w1"):
        print(f"{key:12s} {gan['before'][key]:.4f} -> {gan['after'][key]:.4f}")
    print(f"test map@5 {res.test.map:.4f}  mrr {res.test.mrr:.4f}")


if __name__ == "__main__":
    main()
