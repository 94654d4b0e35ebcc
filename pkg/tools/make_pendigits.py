"""Build data/pendigits/{pendigits.train,pendigits.test} in sparse text form.

The source is the copy of the pen-based digits set bundled in the
``keel-ds`` wheel (all 10,992 instances, raw 0-100 features). The wheel is
only unpacked, never installed, because it pins an old numpy. The train/test
split is stratified with 3,498 test instances, matching the usual sizes.

    python3 tools/make_pendigits.py            # downloads the wheel with pip
    python3 tools/make_pendigits.py --wheel keel_ds-0.2.5-py3-none-any.whl
"""

import argparse
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

import numpy as np

from distnewton.data import stratified_split, write_sparse_text

MEMBER = "keel_ds/data/balanced/raw/penbased.dat"
TEST_COUNT = 3498
SEED = 20160601


def fetch_wheel(dest):
    subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "keel-ds==0.2.5", "-d", str(dest)],
                   check=True)
    return next(Path(dest).glob("keel_ds-*.whl"))


def read_rows(wheel):
    text = zipfile.ZipFile(wheel).read(MEMBER).decode("ascii")
    rows = [line for line in text.splitlines() if line.strip() and not line.startswith("@")]
    data = np.array([[float(v) for v in line.split(",")] for line in rows])
    return data[:, :-1], data[:, -1].astype(int)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--wheel", type=Path)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "data" / "pendigits")
    args = ap.parse_args(argv)
    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel or fetch_wheel(tmp)
        X, y = read_rows(wheel)
    train, test = stratified_split(y, TEST_COUNT, SEED)
    args.out.mkdir(parents=True, exist_ok=True)
    write_sparse_text(args.out / "pendigits.train", y[train], X[train])
    write_sparse_text(args.out / "pendigits.test", y[test], X[test])
    print(f"{len(train)} train / {len(test)} test rows written to {args.out}")


if __name__ == "__main__":
    main()
