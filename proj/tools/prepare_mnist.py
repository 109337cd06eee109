#!/usr/bin/env python3
"""Build MNIST IDX files for the desk-scale experiments.

Two sources are supported:

  * the original IDX distribution (``--idx-dir`` holding
    train-images-idx3-ubyte / train-labels-idx1-ubyte, optionally .gz); the
    first ``--limit`` images are copied.
  * the ``mnist`` npm package, which bundles 10,000 MNIST training digits as
    per-class JSON arrays of pixel/255 values rounded to 3 decimals. Pixels are
    restored with round(v * 255), which is exact for that quantisation.

Output: <out>/mnist10k-images-idx3-ubyte and <out>/mnist10k-labels-idx1-ubyte.
"""
import argparse
import gzip
import json
import os
import struct
import subprocess
import tarfile
import tempfile


def write_idx(out_dir, images, labels):
    os.makedirs(out_dir, exist_ok=True)
    n = len(labels)
    with open(os.path.join(out_dir, "mnist10k-images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        for img in images:
            f.write(bytes(img))
    with open(os.path.join(out_dir, "mnist10k-labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(bytes(labels))
    print(f"wrote {n} images to {out_dir}")


def from_npm(workdir):
    subprocess.run(["npm", "pack", "mnist@1.1.0", "--silent"], cwd=workdir, check=True)
    tgz = [p for p in os.listdir(workdir) if p.endswith(".tgz")][0]
    with tarfile.open(os.path.join(workdir, tgz)) as tf:
        tf.extractall(workdir)
    per_class = []
    for digit in range(10):
        with open(os.path.join(workdir, "package", "src", "digits", f"{digit}.json")) as f:
            flat = json.load(f)["data"]
        assert len(flat) % 784 == 0
        imgs = [[int(round(v * 255)) for v in flat[i:i + 784]] for i in range(0, len(flat), 784)]
        per_class.append(imgs)
    # Interleave classes so that any prefix is roughly balanced.
    images, labels = [], []
    longest = max(len(c) for c in per_class)
    for i in range(longest):
        for digit, imgs in enumerate(per_class):
            if i < len(imgs):
                images.append(imgs[i])
                labels.append(digit)
    return images, labels


def read_maybe_gz(path):
    if os.path.exists(path):
        with open(path, "rb") as f:
            return f.read()
    with gzip.open(path + ".gz", "rb") as f:
        return f.read()


def from_idx(idx_dir, limit):
    img = read_maybe_gz(os.path.join(idx_dir, "train-images-idx3-ubyte"))
    lab = read_maybe_gz(os.path.join(idx_dir, "train-labels-idx1-ubyte"))
    n = min(limit, struct.unpack(">I", lab[4:8])[0])
    images = [list(img[16 + i * 784:16 + (i + 1) * 784]) for i in range(n)]
    return images, list(lab[8:8 + n])


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data", "mnist"))
    ap.add_argument("--idx-dir", help="directory with the original MNIST IDX files")
    ap.add_argument("--limit", type=int, default=10000)
    args = ap.parse_args()
    if args.idx_dir:
        images, labels = from_idx(args.idx_dir, args.limit)
    else:
        with tempfile.TemporaryDirectory() as tmp:
            images, labels = from_npm(tmp)
    write_idx(os.path.abspath(args.out), images, labels)


if __name__ == "__main__":
    main()
