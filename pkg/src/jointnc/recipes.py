"""Canonical pipelines for the four chessboard figures and their output bundles."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from . import __version__
from .inversion import negativity
from .numerics import FLOAT, RATIONAL
from .render import write_chessboard

RECIPES = {
    1: {"title": "number-number retrieval, Fock state n=7", "state": "fock:7", "mode": RATIONAL},
    2: {"title": "number-number retrieval, photon-added thermal k=1 nbar=1", "state": "pats:k=1,nbar=1",
        "mode": RATIONAL},
    # pinned by the squeezing parameter, not by the rounded mean photon number
    3: {"title": "number-number retrieval, squeezed vacuum r=0.3", "state": "sqvac:r=0.3", "mode": FLOAT,
        "tol": 1e-13},
    4: {"title": "phase-number retrieval, vacuum behind an nbar=1 reference", "state": "vacuum",
        "mode": RATIONAL, "ref_nbar": Fraction(1), "cutoff": 10},
}


@dataclass
class RecipeResult:
    figure: int
    grid: object
    converged: bool
    manifest: dict


def run_recipe(figure: int) -> RecipeResult:
    from .states import number_distribution, parse_state

    r = RECIPES[figure]
    d = number_distribution(parse_state(r["state"]), mode=r["mode"])
    base = {"figure": figure, "title": r["title"], "state": d.spec.text, "mode": d.mode,
            "source_cutoff": d.cutoff, "source_tail_bound": d.tail_bound, "version": __version__}
    if figure == 4:
        from .phase_number import ReferenceBeam, pc_identity, pn_forward, pn_retrieve, to_ragged

        nb = r["ref_nbar"]
        grid = pn_retrieve(to_ragged(pn_forward(d, ReferenceBeam(nb), r["cutoff"])), nb)
        man = dict(base, scheme="pn", ref_nbar=str(nb), cutoff=r["cutoff"], m_def="normalized",
                   precision="exact rational", pc_identity=str(pc_identity(d, nb)))
        converged = True
    else:
        from .number_number import nn_retrieve

        tol = r.get("tol", 1e-12)
        res = nn_retrieve(d, cell_tolerance=tol)
        grid, converged = res.joint, res.converged and not res.truncated
        man = dict(base, scheme="nn", extent=res.extent, cell_tolerance=tol,
                   precision="exact rational" if d.mode == RATIONAL else "binary64 with tracked error bounds",
                   max_cell_error=res.diagnostics["max_cell_error"], truncated=res.truncated)
    rep = negativity(grid)
    man.update(converged=converged, negativity=rep.to_dict())
    return RecipeResult(figure, grid, converged, man)


def write_bundle(result: RecipeResult, out: Path) -> dict:
    """Grid (JSON, CSV), ascii and PGM chessboards, a PNG figure and manifest.json."""
    out = Path(out)
    stem = f"fig{result.figure}"
    files = []
    files += write_chessboard(result.grid, "json", out / f"{stem}.grid.json")
    files += write_chessboard(result.grid, "csv", out / f"{stem}.grid.csv")
    files += write_chessboard(result.grid, "ascii", out / f"{stem}.ascii.txt")
    files += write_chessboard(result.grid, "pgm", out / f"{stem}.pgm")
    files += write_chessboard(result.grid, "png", out / f"{stem}.png", title=result.manifest["title"])
    manifest = dict(result.manifest)
    # the PNG depends on the matplotlib build, so it is listed without a digest
    manifest["files"] = {p.name: (None if p.suffix == ".png" else hashlib.sha256(p.read_bytes()).hexdigest())
                         for p in files}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True), encoding="utf-8")
    return manifest
