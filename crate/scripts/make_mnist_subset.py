"""Build the committed MNIST subset and the tiny IDX fixture.

The digits come from the `mnist` npm package (MIT licence), which ships
10 000 MNIST digits as JSON arrays of pixel/255 values:

    npm pack mnist && tar xzf mnist-1.1.0.tgz
    python3 scripts/make_mnist_subset.py package/src/digits

Outputs:
    data/mnist-subset/images-idx3-ubyte.gz   (3000 images, 300 per class)
    data/mnist-subset/labels-idx1-ubyte.gz
    crates/core/testdata/fixture-images-idx3-ubyte   (10 hand-built images)
    crates/core/testdata/fixture-labels-idx1-ubyte
    crates/core/testdata/fixture-golden.txt          (pixel values, one image per line)
"""
import gzip
import json
import os
import random
import struct
import sys

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
PER_CLASS = 300


def write_idx(images, labels, img_path, lbl_path, compress):
    opener = gzip.open if compress else open
    rows = cols = 28
    with opener(img_path, "wb") as f:
        f.write(struct.pack(">IIII", 2051, len(images), rows, cols))
        for img in images:
            f.write(bytes(img))
    with opener(lbl_path, "wb") as f:
        f.write(struct.pack(">II", 2049, len(labels)))
        f.write(bytes(labels))


def subset(digits_dir):
    rng = random.Random(20200716)
    samples = []
    for d in range(10):
        with open(os.path.join(digits_dir, f"{d}.json")) as f:
            raw = json.load(f)["data"]
        n = len(raw) // 784
        picks = sorted(rng.sample(range(n), PER_CLASS))
        for i in picks:
            img = [int(round(v * 255)) for v in raw[i * 784:(i + 1) * 784]]
            samples.append((img, d))
    rng.shuffle(samples)
    out = os.path.join(ROOT, "data", "mnist-subset")
    os.makedirs(out, exist_ok=True)
    write_idx([s[0] for s in samples], [s[1] for s in samples],
              os.path.join(out, "images-idx3-ubyte.gz"),
              os.path.join(out, "labels-idx1-ubyte.gz"), True)


def fixture():
    # Ten deterministic 28x28 patterns: a bar whose position and
    # intensity ramp depend on the image index.
    images, labels = [], []
    for k in range(10):
        img = []
        for r in range(28):
            for c in range(28):
                v = 0
                if 2 * k <= c < 2 * k + 6:
                    v = (r * 9 + k * 7) % 256
                if r == c:
                    v = 255
                img.append(v)
        images.append(img)
        labels.append(k % 10)
    out = os.path.join(ROOT, "crates", "core", "testdata")
    os.makedirs(out, exist_ok=True)
    write_idx(images, labels,
              os.path.join(out, "fixture-images-idx3-ubyte"),
              os.path.join(out, "fixture-labels-idx1-ubyte"), False)
    with open(os.path.join(out, "fixture-golden.txt"), "w") as f:
        for img, lbl in zip(images, labels):
            f.write(str(lbl) + " " + " ".join(repr(v / 255) for v in img) + "\n")


if __name__ == "__main__":
    fixture()
    if len(sys.argv) > 1:
        subset(sys.argv[1])
