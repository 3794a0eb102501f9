"""Search for a small correlation matrix on which skipping global-patch
denoising changes the mask of the flagged patch and nothing else.

Expected masks come from scikit-learn's DBSCAN, so the fixture checks the C++
clustering against an independent implementation.

usage: python make_denoise_fixture.py tests/data/denoise_fixture.json
"""
import json
import sys

import numpy as np
from sklearn.cluster import DBSCAN

EPS, MIN_SAMPLES = 0.7, 3
N, GLOBAL = 9, 8


def segment(w, rows):
    x = w[rows]
    x = x / np.linalg.norm(x, axis=1, keepdims=True)
    labels = DBSCAN(eps=EPS, min_samples=MIN_SAMPLES).fit(x).labels_
    if (labels < 0).all():
        labels[:] = 0
    protos = np.stack([w[np.array(rows)[labels == c]].mean(0) for c in range(labels.max() + 1)])
    return protos.argmax(0)


def main():
    rng = np.random.default_rng(0)
    groups = np.array([0, 0, 0, 0, 1, 1, 1, 1, 2])
    while True:
        base = rng.uniform(0, 1, (3, 3))
        base = (base + base.T) / 2
        w = base[groups][:, groups]
        noise = rng.normal(0, 0.05, (N, N))
        w = w + (noise + noise.T) / 2
        np.fill_diagonal(w, 1)
        w = np.clip(np.round(w, 3), -1, 1)
        plain = segment(w, list(range(N)))
        denoised = segment(w, [i for i in range(N) if i != GLOBAL])
        if np.nonzero(plain != denoised)[0].tolist() == [GLOBAL]:
            break

    # Inner-product matrix whose only positive global score is GLOBAL.
    w_ip = np.ones((N, N))
    np.fill_diagonal(w_ip, 2.0)
    w_ip[GLOBAL, GLOBAL] = 0.0
    out = {
        "grid": [3, 3],
        "eps": EPS,
        "min_samples": MIN_SAMPLES,
        "w_cosine": w.tolist(),
        "w_inner_product": w_ip.tolist(),
        "flagged": [GLOBAL],
        "plain_masks": plain.tolist(),
        "denoised_masks": denoised.tolist(),
    }
    with open(sys.argv[1], "w") as f:
        json.dump(out, f, indent=1)


if __name__ == "__main__":
    main()
