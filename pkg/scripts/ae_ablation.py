"""Autoencoder ablation at desk scale: bottleneck width, noise vs dropout,
and robustness to perturbed codes.

    python3 scripts/ae_ablation.py --epochs 50 --seeds 5
"""

import argparse
import json
import time
from dataclasses import replace

import numpy as np

from liplab.desk import DESK_AE_TRAIN, spectrogram_corpus
from liplab.nets import NetConfig
from liplab.training import autoencoder_corr2d, train_autoencoder


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--train-utts", type=int, default=20)
    ap.add_argument("--corpus-seed", type=int, default=1234)
    ap.add_argument("--perturb", type=float, default=0.05)
    args = ap.parse_args()

    corpus = spectrogram_corpus(args.corpus_seed, args.train_utts, 2, 4)
    print(f"frames: train {len(corpus.train)} val {len(corpus.val)} test {len(corpus.test)}")
    cfg = replace(DESK_AE_TRAIN, epochs=args.epochs)
    variants = {
        "B16": NetConfig(bottleneck=16),
        "B32": NetConfig(bottleneck=32),
        "B64": NetConfig(bottleneck=64),
        "B32-dropout": NetConfig(bottleneck=32, noise_sigma=0.0, ae_dropout=0.25),
        "B32-clean": NetConfig(bottleneck=32, noise_sigma=0.0),
    }
    results = {}
    for name, net in variants.items():
        rows = []
        for seed in range(args.seeds):
            t0 = time.time()
            run = train_autoencoder(corpus.train, corpus.val, replace(cfg, seed=seed), net)
            rows.append(
                {
                    "seed": seed,
                    "corr2d": autoencoder_corr2d(run.model, corpus.test),
                    "corr2d_perturbed": autoencoder_corr2d(run.model, corpus.test, args.perturb, rng=seed),
                    "seconds": round(time.time() - t0, 1),
                }
            )
            print(name, rows[-1], flush=True)
        results[name] = rows
    summary = {k: {m: float(np.mean([r[m] for r in v])) for m in ("corr2d", "corr2d_perturbed")} for k, v in results.items()}
    print(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
