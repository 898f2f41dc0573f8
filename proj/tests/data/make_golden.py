"""Writes the wire-format golden files from a hand layout with struct.

Independent of the C++ encoder: header, then preorder tags, leaves as
h (C+1 x f32), count (u32), mean log q (C+1 x f32), all little endian.
"""
import pathlib
import struct

HERE = pathlib.Path(__file__).parent
ORIGIN = (1.0, -2.0, 0.5)
CELL = 0.25
C = 2


def header(depth):
    return b"SOM1" + struct.pack("<BB3ff", C, depth, *ORIGIN, CELL)


def leaf(h, count, mean):
    return bytes([2]) + struct.pack("<3f", *h) + struct.pack("<I", count) + struct.pack("<3f", *mean)


ABSENT = bytes([0])
INNER = bytes([1])

# Empty tree: root leaf at the prior, nothing observed.
empty = header(3) + leaf((0, 0, 0), 0, (0, 0, 0))
assert len(empty) == 51

# Depth 1, one leaf in octant 5 (x and z high).
one_leaf = header(1) + INNER + ABSENT * 5 + leaf((0, 1.5, -0.25), 2, (-0.5, -1.5, -0.25)) + ABSENT * 2
assert len(one_leaf) == 59

# Depth 2: a merged octant 0, octant 3 holding one finest leaf in its child 6.
mixed = (header(2) + INNER
         + leaf((0, -0.75, 2.0), 1, (-0.25, -1.0, -2.0))
         + ABSENT * 2
         + INNER + ABSENT * 6 + leaf((0, 3.0, 0.125), 3, (-2.0, -0.125, -0.5)) + ABSENT
         + ABSENT * 4)
assert len(mixed) == 95

for name, data in [("empty_c2_d3.som", empty), ("one_leaf_c2_d1.som", one_leaf), ("mixed_c2_d2.som", mixed)]:
    (HERE / name).write_bytes(data)
