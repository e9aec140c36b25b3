"""Chessboard renderings of signed grids: ascii, binary PGM, CSV, JSON and PNG."""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .inversion import JointGrid
from .phase_number import RaggedJoint

FORMATS = ("ascii", "pgm", "csv", "json", "png")
POSITIVE = "0123456789"
NEGATIVE = "ABCDEFGHIJ"
ZERO = "."
ABSENT = " "


class UnwritableOutput(OSError):
    pass


def _matrix(grid):
    """Dense float matrix with NaN where a ragged row has no such m; plus axis labels."""
    if isinstance(grid, RaggedJoint):
        cols = grid.m_union()
        idx = {m: i for i, m in enumerate(cols)}
        mat = np.full((len(grid.rows), len(cols)), np.nan)
        for (n, m), v, _ in grid.cells():
            mat[n, idx[m]] = float(v)
        rows = list(range(len(grid.rows)))
        axes = grid.meta.get("axes", [grid.row_name, "m"])
        return mat, rows, cols, axes
    mat = grid.floats().astype(float)
    axes = grid.meta.get("axes", ["row", "col"])
    return mat, list(grid.row_labels), list(grid.col_labels), axes


def bucket(v: float, scale: float) -> str:
    """Sign first, then the decile of |v| / scale (the top decile includes 1)."""
    if v == 0 or scale == 0:
        return ZERO
    k = min(9, int(math.floor(10 * abs(v) / scale)))
    return NEGATIVE[k] if v < 0 else POSITIVE[k]


def render_ascii(grid) -> str:
    mat, rows, cols, axes = _matrix(grid)
    finite = mat[np.isfinite(mat)]
    scale = float(np.max(np.abs(finite))) if finite.size else 0.0
    head = [
        f"# chessboard rows={axes[0]} cols={axes[1]} max|v|={scale:.6g}",
        "# '.' zero, digits 0-9 positive, letters A-J negative (J darkest);",
        "# symbol k covers k/10 <= |v|/max|v| < (k+1)/10, the top bucket includes 1",
        "# cols: " + " ".join(str(c) for c in cols),
    ]
    width = max(len(str(r)) for r in rows)
    body = []
    for r, line in zip(rows, mat):
        sym = "".join(ABSENT if not np.isfinite(v) else bucket(v, scale) for v in line)
        body.append(f"{str(r).rjust(width)} {sym}")
    return "\n".join(head + body) + "\n"


def render_pgm(grid) -> tuple[bytes, bytes]:
    """Binary P5 magnitude image (|v| / max|v| to 0..255) and a P5 sign mask (255 = negative)."""
    mat, _, _, _ = _matrix(grid)
    clean = np.where(np.isfinite(mat), mat, 0.0)
    scale = float(np.max(np.abs(clean))) if clean.size else 0.0
    mag = np.zeros(clean.shape, dtype=np.uint8) if scale == 0 else \
        np.rint(255 * np.abs(clean) / scale).astype(np.uint8)
    sign = np.where(clean < 0, 255, 0).astype(np.uint8)
    h, w = clean.shape

    def pgm(a):
        return f"P5\n{w} {h}\n255\n".encode("ascii") + a.tobytes()

    return pgm(mag), pgm(sign)


def render_png(grid, path, title: str = "") -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.colors import TwoSlopeNorm

    mat, rows, cols, axes = _matrix(grid)
    finite = mat[np.isfinite(mat)]
    lo = min(float(finite.min()) if finite.size else 0.0, -1e-300)
    hi = max(float(finite.max()) if finite.size else 0.0, 1e-300)
    fig, ax = plt.subplots(figsize=(1 + 0.45 * max(len(cols), 4), 1 + 0.45 * max(len(rows), 4)))
    im = ax.imshow(np.ma.masked_invalid(mat), cmap="RdBu_r", norm=TwoSlopeNorm(0.0, lo, hi),
                   origin="lower", interpolation="nearest")
    ax.set_xticks(range(len(cols)))
    ax.set_xticklabels([str(c) for c in cols], rotation=90 if len(cols) > 8 else 0, fontsize=7)
    ax.set_yticks(range(len(rows)))
    ax.set_yticklabels([str(r) for r in rows], fontsize=7)
    ax.set_xlabel(axes[1])
    ax.set_ylabel(axes[0])
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    path = Path(path)
    try:
        fig.savefig(path, dpi=120)
    except OSError as e:
        raise UnwritableOutput(str(e)) from e
    finally:
        plt.close(fig)
    return path


def render_chessboard(grid, fmt: str):
    """Render to a document: str for ascii/csv/json, a (magnitude, sign) pair of bytes for pgm."""
    if fmt == "ascii":
        return render_ascii(grid)
    if fmt == "pgm":
        return render_pgm(grid)
    if fmt == "csv":
        return grid.to_csv()
    if fmt == "json":
        return grid.to_json(indent=1)
    raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def write_chessboard(grid, fmt: str, path, title: str = "") -> list[Path]:
    """Write a rendering next to ``path``; pgm also writes ``<stem>.sign.pgm``."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "png":
            return [render_png(grid, path, title)]
        doc = render_chessboard(grid, fmt)
        if fmt == "pgm":
            mask = path.with_name(path.stem + ".sign.pgm")
            path.write_bytes(doc[0])
            mask.write_bytes(doc[1])
            return [path, mask]
        path.write_text(doc, encoding="utf-8")
        return [path]
    except OSError as e:
        if isinstance(e, UnwritableOutput):
            raise
        raise UnwritableOutput(f"cannot write {path}: {e}") from e


def is_signed_grid(obj) -> bool:
    return isinstance(obj, (JointGrid, RaggedJoint))
