"""Float64 NumPy reference for the NIQE pipeline; prints values frozen in test_metrics.cpp.

Follows the widely used Python port (scipy 'nearest' convolution, np.roll
shifts, MATLAB-style antialiased bicubic). Run: python3 niqe_oracle.py [model.bin]
"""
import json
import math
import sys

import numpy as np
from scipy.ndimage import convolve
from scipy.special import gamma


def pattern(h, w, seed):
    """Integer-only test image shared with the C++ side."""
    img = np.zeros((h, w))
    state = seed & 0xFFFFFFFFFFFFFFFF
    for y in range(h):
        for x in range(w):
            state = (state * 6364136223846793005 + 1442695040888963407) & 0xFFFFFFFFFFFFFFFF
            noise = ((state >> 33) % 41) - 20
            v = ((x * 7 + y * 13) // 9) % 97 + ((x // 16 + y // 24) % 3) * 40 + noise
            img[y, x] = min(255, max(0, v))
    return img


def estimate_aggd_param(block):
    block = block.flatten()
    gam = np.arange(0.2, 10.001, 0.001)
    gam_reciprocal = np.reciprocal(gam)
    r_gam = np.square(gamma(gam_reciprocal * 2)) / (gamma(gam_reciprocal) * gamma(gam_reciprocal * 3))
    left_std = np.sqrt(np.mean(block[block < 0] ** 2))
    right_std = np.sqrt(np.mean(block[block > 0] ** 2))
    gammahat = left_std / right_std
    rhat = (np.mean(np.abs(block))) ** 2 / np.mean(block ** 2)
    rhatnorm = (rhat * (gammahat ** 3 + 1) * (gammahat + 1)) / ((gammahat ** 2 + 1) ** 2)
    array_position = np.argmin((r_gam - rhatnorm) ** 2)
    alpha = gam[array_position]
    beta_l = left_std * np.sqrt(gamma(1 / alpha) / gamma(3 / alpha))
    beta_r = right_std * np.sqrt(gamma(1 / alpha) / gamma(3 / alpha))
    return alpha, beta_l, beta_r


def compute_feature(block):
    feat = []
    alpha, beta_l, beta_r = estimate_aggd_param(block)
    feat.extend([alpha, (beta_l + beta_r) / 2])
    for shift in [[0, 1], [1, 0], [1, 1], [1, -1]]:
        shifted = np.roll(block, shift, axis=(0, 1))
        alpha, beta_l, beta_r = estimate_aggd_param(block * shifted)
        mean = (beta_r - beta_l) * (gamma(2 / alpha) / gamma(1 / alpha))
        feat.extend([alpha, mean, beta_l, beta_r])
    return feat


def cubic(x):
    absx = np.abs(x)
    absx2 = absx ** 2
    absx3 = absx ** 3
    return (1.5 * absx3 - 2.5 * absx2 + 1) * (absx <= 1) + (
        -0.5 * absx3 + 2.5 * absx2 - 4 * absx + 2) * ((absx > 1) * (absx <= 2))


def weights_indices(in_length, out_length, scale, kernel_width=4.0):
    x = np.arange(1, out_length + 1, dtype=np.float64)
    u = x / scale + 0.5 * (1 - 1 / scale)
    kernel_width = kernel_width / scale
    left = np.floor(u - kernel_width / 2)
    p = int(math.ceil(kernel_width) + 2)
    indices = left[:, None] + np.arange(p)[None, :]
    weights = scale * cubic((u[:, None] - indices) * scale)
    weights = weights / weights.sum(axis=1, keepdims=True)
    return weights, indices.astype(int)


def mirror(idx, n):
    idx = idx.copy()
    idx[idx < 1] = 1 - idx[idx < 1]
    idx[idx > n] = 2 * n + 1 - idx[idx > n]
    return idx - 1


def imresize_half(img):
    h, w = img.shape
    oh, ow = math.ceil(h * 0.5), math.ceil(w * 0.5)
    wh, ih = weights_indices(h, oh, 0.5)
    ww, iw = weights_indices(w, ow, 0.5)
    ih, iw = mirror(ih, h), mirror(iw, w)
    tmp = np.einsum('ok,okw->ow', wh, img[ih, :])
    return np.einsum('ok,hok->ho', ww, tmp[:, iw])


def window():
    ax = np.arange(-3, 4, dtype=np.float64)
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2 * (7 / 6) ** 2))
    return g / g.sum()


def patch_features(img, block_size=96):
    h, w = img.shape
    nh, nw = h // block_size, w // block_size
    img = img[:nh * block_size, :nw * block_size]
    win = window()
    distparam = []
    for scale in (1, 2):
        mu = convolve(img, win, mode='nearest')
        sigma = np.sqrt(np.abs(convolve(np.square(img), win, mode='nearest') - np.square(mu)))
        img_nomalized = (img - mu) / (sigma + 1)
        feat = []
        for idx_w in range(nw):
            for idx_h in range(nh):
                block = img_nomalized[idx_h * block_size // scale:(idx_h + 1) * block_size // scale,
                                      idx_w * block_size // scale:(idx_w + 1) * block_size // scale]
                feat.append(compute_feature(block))
        distparam.append(np.array(feat))
        if scale == 1:
            img = imresize_half(img / 255.) * 255.
    return np.concatenate(distparam, axis=1)


def niqe(img, mu_p, cov_p):
    d = patch_features(img)
    mu_d = np.nanmean(d, axis=0)
    d_no_nan = d[~np.isnan(d).any(axis=1)]
    cov_d = np.cov(d_no_nan, rowvar=False)
    inv = np.linalg.pinv((cov_p + cov_d) / 2)
    diff = mu_p - mu_d
    return float(np.sqrt(diff @ inv @ diff))


def load_model(path):
    raw = open(path, 'rb').read()
    nl = raw.index(b'\n')
    head = json.loads(raw[:nl])
    body = np.frombuffer(raw[nl + 1:], dtype='<f8')
    d = head['feature_dim']
    return body[:d], body[d:].reshape(d, d)


def main():
    model = sys.argv[1] if len(sys.argv) > 1 else 'data/niqe_pristine.bin'
    mu_p, cov_p = load_model(model)
    np.set_printoptions(precision=17)
    small = pattern(7, 9, 5)
    r = imresize_half(small)
    print('resize 7x9 seed5 [0,0] [1,2] [3,4] sum', repr(r[0, 0]), repr(r[1, 2]), repr(r[3, 4]), repr(r.sum()))
    for h, w, seed in [(192, 192, 1), (288, 192, 2), (200, 300, 3)]:
        img = pattern(h, w, seed)
        f = patch_features(img)
        print(f'{h}x{w} seed{seed} niqe', repr(niqe(img, mu_p, cov_p)))
        print('  row0 feats[0,1,3,19,35]', ', '.join(repr(float(f[0, k])) for k in (0, 1, 3, 19, 35)))


if __name__ == '__main__':
    main()
