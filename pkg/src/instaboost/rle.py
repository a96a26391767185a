"""COCO run-length encoding of binary masks.

Runs are stored column-major (Fortran order) and alternate background /
foreground, always starting with a background run. ``counts`` is either a
plain list of run lengths or the compact ASCII string used by COCO tooling
(5-bit chunks, +48 offset, runs delta-coded against ``counts[i-2]``).
"""

from __future__ import annotations

import numpy as np


def encode(mask: np.ndarray) -> dict:
    """Encode a boolean HxW mask as an uncompressed RLE dict."""
    h, w = mask.shape
    flat = np.asarray(mask, dtype=bool).flatten(order="F")
    if flat.size == 0:
        return {"size": [int(h), int(w)], "counts": []}
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts = [0] + counts
    return {"size": [int(h), int(w)], "counts": [int(c) for c in counts]}


def decode(rle: dict) -> np.ndarray:
    """Decode an RLE dict (list or string counts) to a boolean HxW mask."""
    h, w = (int(v) for v in rle["size"])
    counts = rle["counts"]
    if isinstance(counts, (bytes, str)):
        counts = decode_count_string(counts)
    counts = [int(c) for c in counts]
    total = sum(counts)
    if total != h * w:
        raise ValueError(f"RLE counts sum to {total}, expected {h * w}")
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for run in counts:
        if value:
            flat[pos:pos + run] = True
        pos += run
        value = not value
    return flat.reshape((h, w), order="F")


def decode_count_string(s: str | bytes) -> list[int]:
    """Expand the compact COCO count string into run lengths."""
    if isinstance(s, bytes):
        s = s.decode("ascii")
    counts: list[int] = []
    i = 0
    while i < len(s):
        x = 0
        k = 0
        more = True
        while more:
            c = ord(s[i]) - 48
            x |= (c & 0x1F) << (5 * k)
            more = bool(c & 0x20)
            i += 1
            k += 1
            if not more and (c & 0x10):
                x |= -1 << (5 * k)
        if len(counts) > 2:
            x += counts[-2]
        counts.append(x)
    return counts


def encode_count_string(counts: list[int]) -> str:
    """Pack run lengths into the compact COCO count string."""
    chars: list[str] = []
    for i, count in enumerate(counts):
        x = int(count)
        if i > 2:
            x -= int(counts[i - 2])
        more = True
        while more:
            c = x & 0x1F
            x >>= 5
            # Sign bit of the emitted chunk decides whether decoding would
            # sign-extend; keep emitting until the remainder is redundant.
            if c & 0x10:
                more = x != -1
            else:
                more = x != 0
            if more:
                c |= 0x20
            chars.append(chr(c + 48))
    return "".join(chars)


def area(rle: dict) -> int:
    """Foreground pixel count without full decoding."""
    counts = rle["counts"]
    if isinstance(counts, (bytes, str)):
        counts = decode_count_string(counts)
    return int(sum(counts[1::2]))
