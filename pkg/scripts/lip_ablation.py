"""Lip-reader loss ablation at desk scale: CorrMSE vs correlation-only vs
MSE-only, scored by held-out decoded Corr2D.

    python3 scripts/lip_ablation.py --seeds 5

Trains its own autoencoder first unless --ae points at a checkpoint.
"""

import argparse
import json
import time
from dataclasses import replace

import numpy as np

from liplab.desk import DESK_AE_TRAIN, DESK_LIP_TRAIN, lip_config, paired_samples, spectrogram_corpus, utterance_seeds
from liplab.nets import NetConfig, load_model
from liplab.training import LossSpec, decoded_corr2d, train_autoencoder, train_lipreader

KINDS = ("corrmse", "corr", "mse")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--epochs", type=int, default=DESK_LIP_TRAIN.epochs)
    ap.add_argument("--lam", type=float, default=DESK_LIP_TRAIN.loss.lam)
    ap.add_argument("--train-utts", type=int, default=30)
    ap.add_argument("--val-utts", type=int, default=6)
    ap.add_argument("--test-utts", type=int, default=10)
    ap.add_argument("--duration", type=float, default=0.6)
    ap.add_argument("--corpus-seed", type=int, default=88)
    ap.add_argument("--ae", help="autoencoder checkpoint to reuse")
    args = ap.parse_args()

    if args.ae:
        ae = load_model(args.ae)
    else:
        frames = spectrogram_corpus(1234, 20, 2, 4)
        ae = train_autoencoder(frames.train, frames.val, DESK_AE_TRAIN, NetConfig()).model

    n_tr, n_va = args.train_utts, args.val_utts
    seeds = utterance_seeds(args.corpus_seed, n_tr + n_va + args.test_utts)
    train = paired_samples(ae, seeds[:n_tr], args.duration, 32)
    val = paired_samples(ae, seeds[n_tr : n_tr + n_va], args.duration, 32)
    test = paired_samples(ae, seeds[n_tr + n_va :], args.duration, 32)
    print(f"slices: train {sum(len(s.targets) for s in train)} test {sum(len(s.targets) for s in test)}")

    results = {k: [] for k in KINDS}
    for seed in range(args.seeds):
        for kind in KINDS:
            cfg = replace(DESK_LIP_TRAIN, loss=LossSpec(kind, args.lam), epochs=args.epochs, seed=seed)
            t0 = time.time()
            run = train_lipreader(train, val, ae, cfg, lip_config(ae, 32))
            results[kind].append(decoded_corr2d(run.model, ae, test))
            print(f"seed {seed} {kind}: {results[kind][-1]:.4f} ({time.time() - t0:.0f} s)", flush=True)
    ordered = sum(results["corrmse"][i] >= results["corr"][i] >= results["mse"][i] for i in range(args.seeds))
    summary = {k: float(np.mean(v)) for k, v in results.items()}
    summary["ordering_holds"] = f"{ordered}/{args.seeds}"
    print(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
