#!/usr/bin/env python3
"""Offline trainer for the committed desk-scale checkpoints.

Trains two small bias-free networks on the 8x8 digits task (10 classes),
quantizes the weights to 8-bit two's-complement codes with a per-layer
symmetric scale (max|w| / 127), and writes:

    data/digits.qds   held-out evaluation samples (binary, little-endian)
    data/mlp.qnn      dense 64-48-10 checkpoint
    data/conv.qnn     conv 6x3x3 + dense 216-10 checkpoint

The simulator never trains; these files are the frozen victim workloads.
Rerunning this script with the same seed reproduces them byte for byte.
"""

import struct
import sys
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits

SEED = 20240711
OUT_DIR = Path(__file__).resolve().parent.parent / "data"

CKP_MAGIC = b"QNNCKP"
DAT_MAGIC = b"QNNDAT"
FORMAT_VERSION = 1

KIND_DENSE = 0
KIND_CONV2D = 1
ACT_NONE = 0
ACT_RELU = 1


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def one_hot(y, k):
    out = np.zeros((y.size, k))
    out[np.arange(y.size), y] = 1.0
    return out


def im2col(x, kh, kw):
    # x: [n, c, h, w] -> [n, oh*ow, c*kh*kw], valid padding, stride 1
    n, c, h, w = x.shape
    oh, ow = h - kh + 1, w - kw + 1
    cols = np.empty((n, oh * ow, c * kh * kw))
    idx = 0
    for i in range(oh):
        for j in range(ow):
            cols[:, idx, :] = x[:, :, i:i + kh, j:j + kw].reshape(n, -1)
            idx += 1
    return cols


class Dense:
    def __init__(self, rng, fan_in, fan_out, relu):
        self.w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
        self.relu = relu

    def forward(self, x):
        self.x = x
        z = x @ self.w.T
        self.z = z
        return np.maximum(z, 0.0) if self.relu else z

    def backward(self, dy):
        if self.relu:
            dy = dy * (self.z > 0.0)
        self.dw = dy.T @ self.x
        return dy @ self.w


class Conv2d:
    def __init__(self, rng, in_c, out_c, kh, kw, in_h, in_w):
        fan_in = in_c * kh * kw
        self.w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(out_c, fan_in))
        self.in_c, self.out_c = in_c, out_c
        self.kh, self.kw, self.in_h, self.in_w = kh, kw, in_h, in_w
        self.oh, self.ow = in_h - kh + 1, in_w - kw + 1

    def forward(self, x):
        imgs = x.reshape(-1, self.in_c, self.in_h, self.in_w)
        self.cols = im2col(imgs, self.kh, self.kw)        # [n, p, f]
        z = self.cols @ self.w.T                          # [n, p, out_c]
        self.z = z
        y = np.maximum(z, 0.0)
        # emit channel-major features: [n, out_c, p]
        return y.transpose(0, 2, 1).reshape(x.shape[0], -1)

    def backward(self, dy):
        n = dy.shape[0]
        dy = dy.reshape(n, self.out_c, -1).transpose(0, 2, 1)  # [n, p, out_c]
        dy = dy * (self.z > 0.0)
        self.dw = np.einsum("npo,npf->of", dy, self.cols)
        dcols = dy @ self.w                                    # [n, p, f]
        dx = np.zeros((n, self.in_c, self.in_h, self.in_w))
        idx = 0
        for i in range(self.oh):
            for j in range(self.ow):
                dx[:, :, i:i + self.kh, j:j + self.kw] += dcols[:, idx, :].reshape(
                    n, self.in_c, self.kh, self.kw)
                idx += 1
        return dx.reshape(n, -1)


def train(layers, xtr, ytr, epochs, lr, batch, rng, num_classes=10):
    n = xtr.shape[0]
    ms = [np.zeros_like(l.w) for l in layers]
    vs = [np.zeros_like(l.w) for l in layers]
    t = 0
    for ep in range(epochs):
        order = rng.permutation(n)
        for s in range(0, n, batch):
            idx = order[s:s + batch]
            x, y = xtr[idx], ytr[idx]
            h = x
            for l in layers:
                h = l.forward(h)
            p = softmax(h)
            dy = (p - one_hot(y, num_classes)) / x.shape[0]
            for l in reversed(layers):
                dy = l.backward(dy)
            t += 1
            for i, l in enumerate(layers):
                ms[i] = 0.9 * ms[i] + 0.1 * l.dw
                vs[i] = 0.999 * vs[i] + 0.001 * l.dw ** 2
                mh = ms[i] / (1 - 0.9 ** t)
                vh = vs[i] / (1 - 0.999 ** t)
                l.w -= lr * mh / (np.sqrt(vh) + 1e-8)


def predict(layers, x):
    h = x
    for l in layers:
        h = l.forward(h)
    return h.argmax(axis=1)


def quantize(w):
    scale = np.abs(w).max() / 127.0
    codes = np.clip(np.round(w / scale), -127, 127).astype(np.int8)
    return scale, codes


def dequant_layers(layers):
    qs = []
    for l in layers:
        scale, codes = quantize(l.w)
        qs.append((scale, codes))
    return qs


def quantized_predict(layers, qs, x):
    saved = [l.w.copy() for l in layers]
    for l, (scale, codes) in zip(layers, qs):
        l.w = codes.astype(np.float64) * scale
    pred = predict(layers, x)
    for l, w in zip(layers, saved):
        l.w = w
    return pred


def random_flip_probe(layers, qs, x, y, flips, trials, rng):
    """Accuracy after `flips` uniformly random bit flips, averaged over trials."""
    sizes = [q[1].size * 8 for q in qs]
    total = sum(sizes)
    accs = []
    for _ in range(trials):
        qs2 = [(s, c.copy()) for s, c in qs]
        picks = rng.choice(total, size=flips, replace=False)
        for p in picks:
            li = 0
            while p >= sizes[li]:
                p -= sizes[li]
                li += 1
            wi, bit = divmod(p, 8)
            c = qs2[li][1]
            flat = c.reshape(-1)
            flat[wi] = np.int8(np.uint8(flat[wi]) ^ np.uint8(1 << bit))
        pred = quantized_predict(layers, qs2, x)
        accs.append((pred == y).mean())
    return float(np.mean(accs)), float(np.min(accs))


def write_dataset(path, x, y, num_classes):
    with open(path, "wb") as f:
        f.write(DAT_MAGIC)
        f.write(struct.pack("<H", FORMAT_VERSION))
        f.write(struct.pack("<III", x.shape[0], x.shape[1], num_classes))
        f.write(x.astype("<f4").tobytes())
        f.write(y.astype(np.uint8).tobytes())


def write_checkpoint(path, layers, qs, num_classes, input_size):
    with open(path, "wb") as f:
        f.write(CKP_MAGIC)
        f.write(struct.pack("<H", FORMAT_VERSION))
        f.write(struct.pack("<III", len(layers), num_classes, input_size))
        for l, (scale, codes) in zip(layers, qs):
            if isinstance(l, Dense):
                f.write(struct.pack("<BBH", KIND_DENSE, ACT_RELU if l.relu else ACT_NONE, 0))
                f.write(struct.pack("<II", l.w.shape[1], l.w.shape[0]))
            else:
                f.write(struct.pack("<BBH", KIND_CONV2D, ACT_RELU, 0))
                f.write(struct.pack("<IIIIII", l.in_c, l.out_c, l.kh, l.kw, l.in_h, l.in_w))
            f.write(struct.pack("<d", scale))
            f.write(codes.tobytes())


def main():
    OUT_DIR.mkdir(exist_ok=True)
    rng = np.random.default_rng(SEED)

    digits = load_digits()
    x = digits.data / 16.0
    y = digits.target
    order = rng.permutation(x.shape[0])
    x, y = x[order], y[order]
    n_test = 360
    xte, yte = x[:n_test], y[:n_test]
    xtr, ytr = x[n_test:], y[n_test:]

    write_dataset(OUT_DIR / "digits.qds", xte, yte, 10)
    print(f"dataset: {n_test} held-out samples, 64 features, 10 classes")

    # --- MLP 64-48-10 ---
    mlp = [Dense(rng, 64, 48, relu=True), Dense(rng, 48, 10, relu=False)]
    train(mlp, xtr, ytr, epochs=120, lr=2e-3, batch=64, rng=rng)
    qs = dequant_layers(mlp)
    acc_f = (predict(mlp, xte) == yte).mean()
    acc_q = (quantized_predict(mlp, qs, xte) == yte).mean()
    print(f"mlp: float acc {acc_f:.4f}  quantized acc {acc_q:.4f}")
    mean_a, min_a = random_flip_probe(mlp, qs, xte, yte, flips=100, trials=20, rng=rng)
    print(f"mlp: acc after 100 random bit flips: mean {mean_a:.4f}  min {min_a:.4f}")
    write_checkpoint(OUT_DIR / "mlp.qnn", mlp, qs, 10, 64)
    if acc_q < 0.90:
        sys.exit("mlp quantized accuracy below 0.90")

    # --- conv 1x8x8 -> 6@3x3 -> dense 216-10 ---
    conv = [Conv2d(rng, 1, 6, 3, 3, 8, 8), Dense(rng, 216, 10, relu=False)]
    train(conv, xtr, ytr, epochs=120, lr=2e-3, batch=64, rng=rng)
    qs = dequant_layers(conv)
    acc_f = (predict(conv, xte) == yte).mean()
    acc_q = (quantized_predict(conv, qs, xte) == yte).mean()
    print(f"conv: float acc {acc_f:.4f}  quantized acc {acc_q:.4f}")
    write_checkpoint(OUT_DIR / "conv.qnn", conv, qs, 10, 64)
    if acc_q < 0.90:
        sys.exit("conv quantized accuracy below 0.90")


if __name__ == "__main__":
    main()
