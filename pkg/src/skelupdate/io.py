"""Binary container for factorizations.

Layout::

    b"SKELFACT"            8 bytes
    version                uint32, little endian
    header length          uint64, little endian
    header                 UTF-8 JSON
    payload                raw little-endian arrays, 8-byte aligned

The header holds the configuration, the kernel description, the stage
list and, for every array, its payload offset, dtype and shape. Only
'<f8', '<c16', '<i8' and '<i4' arrays occur.
"""

from __future__ import annotations

import io as _io
import json
import struct
from pathlib import Path
from typing import Dict, List, Union

import numpy as np

from .factor import INF, Factorization, Stage
from .geometry import Box, Discretization, QuadTree
from .kernels import DenseKernel, HelmholtzLS, KernelMatrix, LaplaceDLP
from .skel import SkelData

MAGIC = b"SKELFACT"
VERSION = 1
_DTYPES = {"f": "<f8", "c": "<c16"}


class FormatError(ValueError):
    pass


class _Writer:
    def __init__(self):
        self.buf = _io.BytesIO()
        self.arrays: Dict[str, dict] = {}

    def add(self, name: str, a) -> str:
        a = np.asarray(a)
        if a.dtype.kind in "iu":
            dt = "<i4" if a.dtype.itemsize == 4 else "<i8"
        else:
            dt = _DTYPES.get(a.dtype.kind)
            if dt is None:
                raise FormatError(f"cannot store dtype {a.dtype}")
        pad = (-self.buf.tell()) % 8
        self.buf.write(b"\0" * pad)
        self.arrays[name] = {"offset": self.buf.tell(), "dtype": dt, "shape": list(a.shape)}
        self.buf.write(np.ascontiguousarray(a, dtype=dt).tobytes())
        return name


class _Reader:
    def __init__(self, arrays: dict, payload: bytes):
        self.arrays = arrays
        self.payload = payload

    def get(self, name: str) -> np.ndarray:
        d = self.arrays[name]
        count = int(np.prod(d["shape"])) if d["shape"] else 1
        a = np.frombuffer(self.payload, dtype=d["dtype"], count=count, offset=d["offset"])
        native = {"<f8": np.float64, "<c16": np.complex128, "<i8": np.int64, "<i4": np.int32}
        return a.reshape(d["shape"]).astype(native[d["dtype"]], copy=True)


def _owner_json(o):
    return list(o) if isinstance(o, tuple) else int(o)


def _owner_from_json(o):
    return tuple(o) if isinstance(o, list) else int(o)


def _kernel_header(k: KernelMatrix, w: _Writer) -> dict:
    d = k.disc
    head = {"type": type(k).__name__, "params": k.params(),
            "bounds": list(d.bounds) if d.bounds is not None else None, "fields": []}
    for name in ("points", "weights", "normals", "params", "curvature", "coef"):
        val = getattr(d, name)
        if val is not None:
            w.add("disc/" + name, val)
            head["fields"].append(name)
    if isinstance(k, DenseKernel):
        w.add("kernel/A", k.A)
    return head


def _kernel_from(head: dict, r: _Reader) -> KernelMatrix:
    fields = {name: r.get("disc/" + name) for name in head["fields"]}
    bounds = tuple(head["bounds"]) if head["bounds"] is not None else None
    disc = Discretization(bounds=bounds, **fields)
    kind = head["type"]
    if kind == "LaplaceDLP":
        return LaplaceDLP(disc)
    if kind == "HelmholtzLS":
        return HelmholtzLS(disc, head["params"]["k"])
    if kind == "DenseKernel":
        return DenseKernel(r.get("kernel/A"), disc)
    raise FormatError(f"unknown kernel type {kind!r}")


def _tree_header(tree: QuadTree, w: _Writer) -> dict:
    boxes = tree.boxes
    w.add("tree/level", [b.level for b in boxes])
    w.add("tree/z", np.array([b.z for b in boxes], dtype=np.int64).reshape(-1, 2))
    w.add("tree/center", np.array([b.center for b in boxes], dtype=float).reshape(-1, 2))
    w.add("tree/half_width", [b.half_width for b in boxes])
    w.add("tree/parent", [b.parent for b in boxes])
    w.add("tree/n_children", [len(b.children) for b in boxes])
    w.add("tree/children", np.array([c for b in boxes for c in b.children], dtype=np.int64))
    w.add("tree/leaf_of", tree.leaf_of().astype(np.int64))
    return {"n_occ": tree.n_occ, "n_points": tree.n_points}


def _tree_from(head: dict, r: _Reader) -> QuadTree:
    level, z, center = r.get("tree/level"), r.get("tree/z"), r.get("tree/center")
    half, parent = r.get("tree/half_width"), r.get("tree/parent")
    nch, ch = r.get("tree/n_children"), r.get("tree/children")
    leaf_of = r.get("tree/leaf_of")
    order = np.argsort(leaf_of, kind="stable")
    starts = np.searchsorted(leaf_of[order], np.arange(len(level) + 1))
    boxes, pos = [], 0
    for i in range(len(level)):
        kids = [int(c) for c in ch[pos:pos + nch[i]]]
        pos += nch[i]
        dofs = np.sort(order[starts[i]:starts[i + 1]]).astype(np.intp)
        boxes.append(Box(i, int(level[i]), (int(z[i, 0]), int(z[i, 1])), center[i],
                         float(half[i]), int(parent[i]), kids, dofs))
    return QuadTree(boxes, head["n_occ"], head["n_points"])


def dumps(F: Factorization) -> bytes:
    w = _Writer()
    stages = []
    for t, st in enumerate(F.stages):
        sets = []
        for k, sk in enumerate(st.skels):
            if sk is None:
                continue
            p = f"s{t}/{k}/"
            for name in ("S", "R", "T", "D_SS", "D_RR", "X_sr", "X_rs"):
                w.add(p + name, getattr(sk, name))
            w.add(p + "lu", sk.lu[0])
            w.add(p + "piv", sk.lu[1])
            sets.append(k)
        stages.append({"tag": st.tag, "kind": st.kind, "level": st.level,
                       "owners": [_owner_json(o) for o in st.owners], "sets": sets})
    w.add("root/dofs", F.root_dofs)
    w.add("root/A", F.root_A)
    w.add("root/lu", F.root_lu[0])
    w.add("root/piv", F.root_lu[1])
    header = {"kind": F.kind, "eps": F.eps, "n_proxy": F.n_proxy, "N": F.N,
              "kernel": _kernel_header(F.kernel, w), "tree": _tree_header(F.tree, w),
              "stages": stages, "arrays": w.arrays}
    hb = json.dumps(header, sort_keys=True).encode()
    return MAGIC + struct.pack("<IQ", VERSION, len(hb)) + hb + w.buf.getvalue()


def loads(data: bytes) -> Factorization:
    if data[:8] != MAGIC:
        raise FormatError("not a factorization file (bad magic)")
    version, hlen = struct.unpack("<IQ", data[8:20])
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}")
    header = json.loads(data[20:20 + hlen].decode())
    r = _Reader(header["arrays"], data[20 + hlen:])
    kernel = _kernel_from(header["kernel"], r)
    tree = _tree_from(header["tree"], r)
    N = header["N"]
    elim = np.full(N, INF, dtype=np.int32)
    stages: List[Stage] = []
    for t, sd in enumerate(header["stages"]):
        owners = [_owner_from_json(o) for o in sd["owners"]]
        skels = [None] * len(owners)
        member = np.full(N, -1, dtype=np.int32)
        for k in sd["sets"]:
            p = f"s{t}/{k}/"
            g = {name: r.get(p + name) for name in
                 ("S", "R", "T", "D_SS", "D_RR", "X_sr", "X_rs", "lu", "piv")}
            S, R = g["S"].astype(np.intp), g["R"].astype(np.intp)
            skels[k] = SkelData(owners[k], S, R, g["T"], g["D_SS"], g["D_RR"],
                                (g["lu"], g["piv"]), g["X_sr"], g["X_rs"])
            member[S] = k
            elim[R] = t
        stages.append(Stage(sd["tag"], sd["kind"], sd["level"], owners, skels, member))
    root = r.get("root/dofs").astype(np.intp)
    return Factorization(header["kind"], kernel, tree, header["eps"], header["n_proxy"],
                         stages, elim, root, r.get("root/A"),
                         (r.get("root/lu"), r.get("root/piv")))


def save(F: Factorization, path: Union[str, Path]) -> None:
    Path(path).write_bytes(dumps(F))


def load(path: Union[str, Path]) -> Factorization:
    return loads(Path(path).read_bytes())
