"""Reader and writer for the MMLF feature-bank binary format.

Layout (little-endian throughout)::

    offset  size  field
    0       4     magic b"MMLF"
    4       2     version (u16) = 1
    6       2     reserved, zero
    8       4     C (u32)
    12      4     H (u32)
    16      4     W (u32)
    20      4     num_classes (u32)
    24      ...   per class: class-id (u32), split (u8: 0 train, 1 val, 2 test),
                  num_images (u32), then num_images * C*H*W f32 values,
                  each map in (C, H, W) row-major order

An optional sidecar ``<bank>.names.json`` maps class-ids to display names.
It is never consulted for shapes or splits.
"""

import json
import os
import struct

import numpy as np

from .episodes import BankClass, FeatureBank, Split
from .errors import (BankFormatError, DuplicateClassError, MagicMismatchError,
                     ShapeInconsistencyError, TruncatedPayloadError, UnsupportedVersionError)

MAGIC = b"MMLF"
VERSION = 1
HEADER = struct.Struct("<4sHHIIII")
CLASS_HEADER = struct.Struct("<IBI")


def sidecar_path(path):
    return os.fspath(path) + ".names.json"


def encode_bank(bank):
    if not bank.classes:
        raise ShapeInconsistencyError("cannot write an empty bank")
    c, h, w = bank.shape
    chunks = [HEADER.pack(MAGIC, VERSION, 0, c, h, w, len(bank.classes))]
    for cls in bank.classes:
        chunks.append(CLASS_HEADER.pack(cls.class_id, int(cls.split), cls.maps.shape[0]))
        chunks.append(np.ascontiguousarray(cls.maps, dtype="<f4").tobytes())
    return b"".join(chunks)


def decode_bank(data):
    data = bytes(data)
    if len(data) < 4 or data[:4] != MAGIC:
        raise MagicMismatchError(f"byte 0: expected magic {MAGIC!r}, found {data[:4]!r}")
    if len(data) < HEADER.size:
        raise TruncatedPayloadError(
            f"byte {len(data)}: header needs {HEADER.size} bytes, file has {len(data)}")
    _, version, reserved, c, h, w, num_classes = HEADER.unpack_from(data, 0)
    if version != VERSION:
        raise UnsupportedVersionError(f"byte 4: unsupported version {version}")
    if reserved != 0:
        raise BankFormatError(f"byte 6: reserved field must be zero, found {reserved}")
    if min(c, h, w) < 1:
        raise ShapeInconsistencyError(f"byte 8: map shape ({c}, {h}, {w}) has a zero dimension")
    map_bytes = 4 * c * h * w
    offset = HEADER.size
    classes = []
    seen = {}
    for _ in range(num_classes):
        if offset + CLASS_HEADER.size > len(data):
            raise TruncatedPayloadError(f"byte {offset}: class header runs past end of file")
        class_id, split, n_images = CLASS_HEADER.unpack_from(data, offset)
        if split not in (0, 1, 2):
            raise BankFormatError(f"byte {offset + 4}: class {class_id} has invalid split {split}")
        if class_id in seen:
            raise DuplicateClassError(
                f"byte {offset}: class-id {class_id} appears twice "
                f"(splits {Split(seen[class_id]).name} and {Split(split).name})")
        seen[class_id] = split
        offset += CLASS_HEADER.size
        end = offset + n_images * map_bytes
        if end > len(data):
            raise TruncatedPayloadError(
                f"byte {offset}: class {class_id} payload needs {end - offset} bytes, "
                f"{len(data) - offset} remain")
        maps = np.frombuffer(data, dtype="<f4", count=n_images * c * h * w, offset=offset)
        classes.append(BankClass(class_id, split, maps.reshape(n_images, c, h, w).astype(np.float32)))
        offset = end
    if offset != len(data):
        raise ShapeInconsistencyError(
            f"byte {offset}: {len(data) - offset} trailing bytes after the declared classes")
    return FeatureBank(classes)


def write_bank(bank, path):
    with open(path, "wb") as fh:
        fh.write(encode_bank(bank))
    if bank.names:
        with open(sidecar_path(path), "w") as fh:
            json.dump({str(k): v for k, v in bank.names.items()}, fh, indent=2)


def load_bank(path):
    with open(path, "rb") as fh:
        bank = decode_bank(fh.read())
    side = sidecar_path(path)
    if os.path.exists(side):
        with open(side) as fh:
            bank.names = {int(k): v for k, v in json.load(fh).items()}
    return bank
