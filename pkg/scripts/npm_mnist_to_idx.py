"""Convert the digits bundled in the npm ``mnist`` package to IDX files.

The package (``npm pack mnist``) ships about 10k MNIST digits as
``package/src/digits/<d>.json``, each ``{"data": [...]}`` holding 784 values
per image equal to pixel/255 rounded to three decimals.  This writes a seeded
train/test split as gzipped IDX files plus a manifest entry for ``refhdc``.

    python scripts/npm_mnist_to_idx.py path/to/package out_dir --test 2000
"""

import argparse
import gzip
import json
import struct
from pathlib import Path

import numpy as np


def write_idx(path, array, magic):
    header = struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape)
    Path(path).write_bytes(gzip.compress(header + array.astype(np.uint8).tobytes(), mtime=0))


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("package_dir")
    ap.add_argument("out_dir")
    ap.add_argument("--test", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    images, labels = [], []
    for digit in range(10):
        doc = json.loads((Path(args.package_dir) / "src" / "digits" / f"{digit}.json").read_text())
        values = np.asarray(doc["data"], dtype=np.float64).reshape(-1, 784)
        images.append(np.rint(values * 255).astype(np.uint8))
        labels.append(np.full(len(values), digit, dtype=np.uint8))
    x = np.concatenate(images).reshape(-1, 28, 28)
    y = np.concatenate(labels)
    order = np.random.default_rng(args.seed).permutation(len(y))
    test, train = order[: args.test], order[args.test:]

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(out / "train-images-idx3-ubyte.gz", x[train], 0x00000803)
    write_idx(out / "train-labels-idx1-ubyte.gz", y[train], 0x00000801)
    write_idx(out / "t10k-images-idx3-ubyte.gz", x[test], 0x00000803)
    write_idx(out / "t10k-labels-idx1-ubyte.gz", y[test], 0x00000801)
    manifest_path = out / "manifest.json"
    manifest = json.loads(manifest_path.read_text()) if manifest_path.exists() else {}
    manifest["mnist"] = {
        "format": "idx",
        "train_images": "train-images-idx3-ubyte.gz",
        "train_labels": "train-labels-idx1-ubyte.gz",
        "test_images": "t10k-images-idx3-ubyte.gz",
        "test_labels": "t10k-labels-idx1-ubyte.gz",
    }
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"train {len(train)} / test {len(test)} -> {out}")


if __name__ == "__main__":
    main()
