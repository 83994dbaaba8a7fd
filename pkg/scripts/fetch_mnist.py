#!/usr/bin/env python3
"""Download the canonical MNIST IDX archives into data/mnist/.

The four files are verified against their well-known MD5 checksums, so any
mirror serving the original archives works. Set MNIST_MIRROR to override the
default mirror base URL (useful behind corporate proxies).
"""

import hashlib
import os
import sys
import urllib.request
from pathlib import Path

DEFAULT_MIRROR = "https://github.com/fgnt/mnist/raw/master"

FILES = {
    "train-images-idx3-ubyte.gz": "f68b3c2dcbeaaa9fbdd348bbdeb94873",
    "train-labels-idx1-ubyte.gz": "d53e105ee54ea40749a09fcbcd1e9432",
    "t10k-images-idx3-ubyte.gz": "9fb629c4189551a2d022fa330f9573f3",
    "t10k-labels-idx1-ubyte.gz": "ec29112dd5afa0611ce80d1b7f02629c",
}


def md5(path: Path) -> str:
    h = hashlib.md5()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def main() -> int:
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("data/mnist")
    mirror = os.environ.get("MNIST_MIRROR", DEFAULT_MIRROR).rstrip("/")
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, checksum in FILES.items():
        dest = out_dir / name
        if dest.exists() and md5(dest) == checksum:
            print(f"{name}: up to date")
            continue
        url = f"{mirror}/{name}"
        print(f"{name}: downloading from {url}")
        urllib.request.urlretrieve(url, dest)
        got = md5(dest)
        if got != checksum:
            print(f"{name}: checksum mismatch ({got} != {checksum})", file=sys.stderr)
            return 1
    print(f"MNIST ready in {out_dir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
