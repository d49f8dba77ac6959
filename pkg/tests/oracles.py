"""Independent brute-force reference implementations used to check the
package's vectorized code. Everything here is written as plain loops over
scalars (or transparent numpy compositions) so it can be inspected line by
line against the defining formulas.
"""

import math

import numpy as np

SQRT_HALF = math.sqrt(0.5)


def l1_loop(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    total = 0.0
    for idx in np.ndindex(*a.shape):
        total += abs(a[idx] - b[idx])
    return total / a.size


def mse_loop(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    total = 0.0
    for idx in np.ndindex(*a.shape):
        total += (a[idx] - b[idx]) ** 2
    return total / a.size


def psnr_loop(a, b, data_range=1.0, cap=100.0):
    mse = mse_loop(a, b)
    if mse == 0.0:
        return cap
    return min(cap, 10.0 * math.log10(data_range * data_range / mse))


def tv3d_loop(v):
    """Plain triple sums of absolute forward differences along d, h, w."""
    v = np.asarray(v, dtype=np.float64)
    depth, height, width = v.shape
    total = 0.0
    for d in range(depth - 1):
        for h in range(height):
            for w in range(width):
                total += abs(v[d + 1, h, w] - v[d, h, w])
    for d in range(depth):
        for h in range(height - 1):
            for w in range(width):
                total += abs(v[d, h + 1, w] - v[d, h, w])
    for d in range(depth):
        for h in range(height):
            for w in range(width - 1):
                total += abs(v[d, h, w + 1] - v[d, h, w])
    return total


def project_mean_loop(v, z_lo, z_hi):
    v = np.asarray(v, dtype=np.float64)
    _, height, width = v.shape
    out = np.zeros((height, width))
    for h in range(height):
        for w in range(width):
            acc = 0.0
            for d in range(z_lo, z_hi):
                acc += v[d, h, w]
            out[h, w] = acc / (z_hi - z_lo)
    return out


def adv_losses_scalar(real_logits, fake_logits):
    """Per-element softplus via the stable scalar form; returns (g, d)."""

    def softplus(x):
        return math.log1p(math.exp(-abs(x))) + max(x, 0.0)

    real = np.asarray(real_logits, dtype=np.float64).ravel()
    fake = np.asarray(fake_logits, dtype=np.float64).ravel()
    d = sum(softplus(-x) for x in real) / real.size + sum(softplus(x) for x in fake) / fake.size
    g = sum(softplus(-x) for x in fake) / fake.size
    return g, d


def ssim_windowed_loop(a, b, window=7, k1=0.01, k2=0.03, data_range=1.0):
    """Mean SSIM over all valid window positions of one 2D image pair,
    computed window by window with biased moment estimates."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    height, width = a.shape
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    n = window * window
    values = []
    for i in range(height - window + 1):
        for j in range(width - window + 1):
            wa = a[i : i + window, j : j + window]
            wb = b[i : i + window, j : j + window]
            mu_a = wa.sum() / n
            mu_b = wb.sum() / n
            var_a = (wa * wa).sum() / n - mu_a * mu_a
            var_b = (wb * wb).sum() / n - mu_b * mu_b
            cov = (wa * wb).sum() / n - mu_a * mu_b
            num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
            den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
            values.append(num / den)
    return float(np.mean(values))


def haar_pair(even, odd):
    return (even + odd) * SQRT_HALF, (even - odd) * SQRT_HALF


def dwt3_loop(x):
    """Voxel-loop 3D Haar analysis -> dict of eight (D/2,H/2,W/2) subbands.

    Subband key letters are ordered (d, h, w); L/H = low/high pass. Each
    output value is assembled from the eight source voxels of its 2x2x2 cell
    with +/- signs given by the high-pass letters, scaled by (1/sqrt2)^3.
    """
    x = np.asarray(x, dtype=np.float64)
    depth, height, width = x.shape
    assert depth % 2 == 0 and height % 2 == 0 and width % 2 == 0
    names = ["lll", "llh", "lhl", "lhh", "hll", "hlh", "hhl", "hhh"]
    out = {n: np.zeros((depth // 2, height // 2, width // 2)) for n in names}
    scale = SQRT_HALF**3
    for name in names:
        sd = +1 if name[0] == "l" else -1
        sh = +1 if name[1] == "l" else -1
        sw = +1 if name[2] == "l" else -1
        for d in range(depth // 2):
            for h in range(height // 2):
                for w in range(width // 2):
                    acc = 0.0
                    for od in (0, 1):
                        for oh in (0, 1):
                            for ow in (0, 1):
                                sign = (sd if od else 1) * (sh if oh else 1) * (sw if ow else 1)
                                acc += sign * x[2 * d + od, 2 * h + oh, 2 * w + ow]
                    out[name][d, h, w] = acc * scale
    return out


def dwt2_loop(x):
    """Pixel-loop 2D Haar analysis -> dict with keys ll, lh, hl, hh (h, w order)."""
    x = np.asarray(x, dtype=np.float64)
    height, width = x.shape
    assert height % 2 == 0 and width % 2 == 0
    out = {n: np.zeros((height // 2, width // 2)) for n in ("ll", "lh", "hl", "hh")}
    for name in out:
        sh = +1 if name[0] == "l" else -1
        sw = +1 if name[1] == "l" else -1
        for h in range(height // 2):
            for w in range(width // 2):
                acc = 0.0
                for oh in (0, 1):
                    for ow in (0, 1):
                        sign = (sh if oh else 1) * (sw if ow else 1)
                        acc += sign * x[2 * h + oh, 2 * w + ow]
                out[name][h, w] = acc * 0.5
    return out


def dice_loop(a, b, eps=1e-7):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    inter = sum(x * y for x, y in zip(a, b))
    return (2.0 * inter + eps) / (a.sum() + b.sum() + eps)


def msa_reference(x, module):
    """Numpy re-implementation of the multi-scale attention dataflow using the
    module's extracted parameters; returns (output, softmax_weight_vectors)."""
    import torch

    x = np.asarray(x, dtype=np.float64)
    b, c, d, h, w = x.shape
    groups = module.groups
    cg = c // groups
    w1 = module.conv1.weight.detach().double().numpy()  # (cg, cg, 1, 1, 1)
    b1 = module.conv1.bias.detach().double().numpy()
    w3 = module.conv3.weight.detach().double().numpy()  # (cg, cg, 3, 3, 3)
    b3 = module.conv3.bias.detach().double().numpy()
    gn_w = module.gn.weight.detach().double().numpy()
    gn_b = module.gn.bias.detach().double().numpy()
    eps = module.gn.eps

    def sigmoid(v):
        return 1.0 / (1.0 + np.exp(-v))

    def conv1x1(v):  # v: (cg, L) descriptor stack
        return np.einsum("oi,il->ol", w1[:, :, 0, 0, 0], v) + b1[:, None]

    def conv3x3(v):  # v: (cg, d, h, w), padding 1 — use torch for the heavy conv
        t = torch.from_numpy(v[None])
        out = torch.nn.functional.conv3d(t, torch.from_numpy(w3), torch.from_numpy(b3), padding=1)
        return out[0].numpy()

    gx = x.reshape(b * groups, cg, d, h, w)
    outputs = np.zeros_like(gx)
    softmax_vectors = []
    for i in range(b * groups):
        g = gx[i]
        # (a) per-axis pooled descriptors -> shared pointwise conv -> sigmoids
        desc = np.concatenate(
            [g.mean(axis=(2, 3)), g.mean(axis=(1, 3)), g.mean(axis=(1, 2))], axis=1
        )  # (cg, d+h+w)
        mixed = conv1x1(desc)
        a_d = sigmoid(mixed[:, :d])[:, :, None, None]
        a_h = sigmoid(mixed[:, d : d + h])[:, None, :, None]
        a_w = sigmoid(mixed[:, d + h :])[:, None, None, :]
        pre = g * a_d * a_h * a_w
        # group norm over the whole (cg, d, h, w) block (cg groups of 1 channel
        # in the module = per-channel normalization)
        x1 = np.zeros_like(pre)
        for ch in range(cg):
            mu = pre[ch].mean()
            var = pre[ch].var()
            x1[ch] = (pre[ch] - mu) / math.sqrt(var + eps) * gn_w[ch] + gn_b[ch]
        # (b) local branch
        x2 = conv3x3(g)
        # cross-spatial aggregation
        def softmax(v):
            e = np.exp(v - v.max())
            return e / e.sum()

        x11 = softmax(x1.mean(axis=(1, 2, 3)))
        x21 = softmax(x2.mean(axis=(1, 2, 3)))
        softmax_vectors += [x11, x21]
        w12 = np.einsum("c,cs->s", x11, x2.reshape(cg, -1))
        w22 = np.einsum("c,cs->s", x21, x1.reshape(cg, -1))
        weights = sigmoid((w12 + w22).reshape(d, h, w))
        outputs[i] = g * weights[None]
    return outputs.reshape(b, c, d, h, w), softmax_vectors
