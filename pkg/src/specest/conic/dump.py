"""Plain-text sparse triplet format for conic programs.

Layout, one record per line, ``#`` starts a comment::

    conic 1
    vars <n>
    cone l <count>
    cone s <d1> <d2> ...
    offset <value>
    c <nnz>        followed by nnz lines "<j> <value>"
    G <rows> <nnz> followed by nnz lines "<i> <j> <value>"
    h <nnz>        followed by nnz lines "<i> <value>"
    A <rows> <nnz> followed by nnz lines "<i> <j> <value>"
    b <nnz>        followed by nnz lines "<i> <value>"

PSD rows of G and h are in svec order (upper triangle by rows, off-diagonal
entries scaled by sqrt(2)).  Indices are zero based.
"""

import numpy as np

from .model import ConicProgram


def _vec_lines(tag, v):
    idx = np.flatnonzero(v)
    lines = [f"{tag} {len(idx)}"]
    lines += [f"{i} {float(v[i])!r}" for i in idx]
    return lines


def _mat_lines(tag, M):
    r, c = np.nonzero(M)
    lines = [f"{tag} {M.shape[0]} {len(r)}"]
    lines += [f"{i} {j} {float(M[i, j])!r}" for i, j in zip(r, c)]
    return lines


def dump_program(prog, path=None):
    lines = ["conic 1", f"vars {prog.n}", f"cone l {prog.dims['l']}",
             "cone s " + " ".join(str(d) for d in prog.dims["s"]), f"offset {float(prog.offset)!r}"]
    lines += _vec_lines("c", prog.c)
    lines += _mat_lines("G", prog.G)
    lines += _vec_lines("h", prog.h)
    lines += _mat_lines("A", prog.A)
    lines += _vec_lines("b", prog.b)
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def load_program(text):
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    pos = 0

    def take():
        nonlocal pos
        pos += 1
        return lines[pos - 1].split()

    head = take()
    if head[:2] != ["conic", "1"]:
        raise ValueError("not a conic program dump")
    n = int(take()[1])
    l = int(take()[2])
    sizes = [int(v) for v in take()[2:]]
    offset = float(take()[1])

    def read_vec(tag, length):
        rec = take()
        if rec[0] != tag:
            raise ValueError(f"expected record {tag!r}, got {rec[0]!r}")
        v = np.zeros(length)
        for _ in range(int(rec[1])):
            i, val = take()
            v[int(i)] = float(val)
        return v

    def read_mat(tag):
        rec = take()
        if rec[0] != tag:
            raise ValueError(f"expected record {tag!r}, got {rec[0]!r}")
        M = np.zeros((int(rec[1]), n))
        for _ in range(int(rec[2])):
            i, j, val = take()
            M[int(i), int(j)] = float(val)
        return M

    c = read_vec("c", n)
    G = read_mat("G")
    h = read_vec("h", G.shape[0])
    A = read_mat("A")
    b = read_vec("b", A.shape[0])
    return ConicProgram(c, G, h, A, b, {"l": l, "s": sizes}, offset)
