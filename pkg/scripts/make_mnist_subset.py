"""Write the 5000-digit MNIST subset bundled with mlxtend as gzipped IDX files.

Usage:
    python scripts/make_mnist_subset.py [--wheel mlxtend-*.whl] [--out data/]

Without ``--wheel`` the installed ``mlxtend`` package is used.
"""
import argparse
import gzip
import io
import zipfile
from pathlib import Path

import numpy as np

from jacreg.data import write_idx

CSV_MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def load_csv_bytes(wheel):
    if wheel:
        with zipfile.ZipFile(wheel) as z:
            return z.read(CSV_MEMBER)
    import mlxtend.data.mnist as m

    return Path(m.DATA_PATH).read_bytes()


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--wheel", default=None)
    ap.add_argument("--out", default="data")
    args = ap.parse_args()
    table = np.loadtxt(io.BytesIO(gzip.decompress(load_csv_bytes(args.wheel))), delimiter=",")
    images = table[:, :-1].reshape(-1, 28, 28).astype(np.uint8)
    labels = table[:, -1].astype(np.uint8)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(out / "mnist5k-images-idx3-ubyte.gz", images)
    write_idx(out / "mnist5k-labels-idx1-ubyte.gz", labels)
    print(f"wrote {len(images)} images to {out}/")


if __name__ == "__main__":
    main()
