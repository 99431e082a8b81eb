#!/usr/bin/env python3
"""Convert a NIQE pristine-model .npz (mu_pris_param, cov_pris_param) into
the toolkit's model format: one JSON header line, then float64 little-endian
mu[36] and cov[36*36] (row major).

    python3 tools/convert_niqe_params.py niqe_pris_params.npz data/niqe_pristine.bin
"""
import hashlib
import json
import struct
import sys

import numpy as np


def main():
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    params = np.load(sys.argv[1])
    mu = np.asarray(params["mu_pris_param"], dtype="<f8").reshape(-1)
    cov = np.asarray(params["cov_pris_param"], dtype="<f8").reshape(mu.size, mu.size)
    body = mu.tobytes() + cov.tobytes()
    header = {
        "format": "hep-niqe-1",
        "patch_size": 96,
        "feature_dim": int(mu.size),
        "corpus_hash": hashlib.sha256(body).hexdigest()[:16],
        "corpus": "reference pristine set (converted)",
    }
    with open(sys.argv[2], "wb") as f:
        f.write((json.dumps(header) + "\n").encode())
        f.write(body)
    print(f"wrote {sys.argv[2]}: dim {mu.size}")


if __name__ == "__main__":
    main()
