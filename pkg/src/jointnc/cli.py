"""Command-line front end.

Global options (before the subcommand) pick the output format and path;
``JOINTNC_MODE`` sets the default scalar mode and ``--config FILE`` reads
key=value defaults for any subcommand option.  Exit status is 0 only when
every requested series converged; failures print JSON diagnostics.
"""
from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import dataclass, fields
from fractions import Fraction
from pathlib import Path

import click

from . import __version__
from .inversion import negativity
from .numerics import FLOAT, MODES, RATIONAL, to_float
from .render import FORMATS, UnwritableOutput, render_chessboard, write_chessboard

EXIT_UNCONVERGED = 2
EXIT_ERROR = 1


# ---------------------------------------------------------------------------
# run configuration


@dataclass
class RunConfig:
    """Flat key=value run settings; unknown keys are rejected."""

    scheme: str | None = None
    state: str | None = None
    mode: str | None = None
    cutoff: int | None = None
    tol: float | None = None
    format: str | None = None
    out: str | None = None
    seed: int | None = None
    ref_nbar: str | None = None
    m_def: str | None = None
    shots: int | None = None
    bootstrap: int | None = None

    @staticmethod
    def _kind(name):
        return {"cutoff": int, "seed": int, "shots": int, "bootstrap": int, "tol": float}.get(name, str)

    @classmethod
    def _items(cls, text: str) -> dict:
        names = {f.name for f in fields(cls)}
        out = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, eq, val = line.partition("=")
            key = key.strip().lower().replace("-", "_")
            if not eq or key not in names:
                raise click.BadParameter(f"config line {lineno}: {raw!r}")
            val = val.strip()
            kind = cls._kind(key)
            try:
                out[key] = kind(val) if kind is not float else float(val)
            except ValueError as exc:
                raise click.BadParameter(f"config line {lineno}: bad value for {key}") from exc
        return out

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        return cls(**cls._items(text))

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if getattr(self, f.name) is not None}

    def serialize(self) -> str:
        return "".join(f"{k}={_canon(v)}\n" for k, v in sorted(self.as_dict().items()))

    @classmethod
    def normalize(cls, text: str) -> str:
        """Canonical text: comments and blanks dropped, keys sorted, last one wins."""
        return "".join(f"{k}={_canon(v)}\n" for k, v in sorted(cls._items(text).items()))


def _canon(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def _default_map(cfg: RunConfig) -> dict:
    d = cfg.as_dict()
    per = {k: v for k, v in d.items() if k not in ("format", "out")}
    return {name: per for name in ("qubit", "nn", "pn", "sample", "reproduce", "scan")}


# ---------------------------------------------------------------------------
# output helpers


def _num(x):
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else int(x)
    return to_float(x) if not isinstance(x, (int, str)) else x


def _fail(message: str, kind: str = "error", code: int = EXIT_ERROR, **extra):
    click.echo(json.dumps({"status": kind, "message": message, **extra}), err=True)
    sys.exit(code)


def _emit(ctx, grid, diagnostics: dict, stem: str, converged: bool = True):
    """Write the grid in the chosen format plus a diagnostics sidecar."""
    fmt, out = ctx.obj["format"], ctx.obj["out"]
    diagnostics = dict(diagnostics, converged=converged)
    if out is None:
        if fmt in ("pgm", "png"):
            _fail(f"--format {fmt} needs --out")
        if fmt == "json":
            click.echo(json.dumps({"grid": grid.to_dict(), "diagnostics": diagnostics}, indent=1))
        else:
            click.echo(render_chessboard(grid, fmt), nl=False)
            click.echo(json.dumps(diagnostics), err=True)
    else:
        path = Path(out)
        if path.is_dir() or out.endswith("/"):
            path = path / f"{stem}.{'txt' if fmt == 'ascii' else fmt}"
        try:
            written = write_chessboard(grid, fmt, path, title=stem)
            side = path.with_name(path.stem + ".diagnostics.json")
            side.write_text(json.dumps(diagnostics, indent=1), encoding="utf-8")
        except (UnwritableOutput, OSError) as e:
            _fail(str(e), "unwritable")
        click.echo(json.dumps({"written": [str(p) for p in written + [side]], "converged": converged}))
    if not converged:
        sys.exit(EXIT_UNCONVERGED)


def _load_distribution(state: str, mode: str | None):
    from .states import number_distribution, parse_state

    spec = parse_state(state, Path.cwd())
    return number_distribution(spec, mode=mode)


def _rational_or_float(text: str):
    try:
        return Fraction(text.strip())
    except ValueError:
        return float(text)


# ---------------------------------------------------------------------------
# commands


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--format", "fmt", type=click.Choice(FORMATS), default="json", show_default=True,
              help="Output format for grids.")
@click.option("--out", type=str, default=None, help="Output file or directory (default stdout).")
@click.option("--config", "config", type=click.Path(exists=True, dir_okay=False),
              help="key=value file with defaults for subcommand options.")
@click.version_option(__version__)
@click.pass_context
def main(ctx, fmt, out, config):
    """Nonclassicality from the joint statistics of simultaneous measurements."""
    ctx.ensure_object(dict)
    cfg = RunConfig.parse(Path(config).read_text(encoding="utf-8")) if config else RunConfig()
    src = ctx.get_parameter_source
    ctx.obj["format"] = cfg.format if cfg.format and src("fmt").name == "DEFAULT" else fmt
    ctx.obj["out"] = out if out is not None else cfg.out
    ctx.obj["config"] = cfg
    ctx.default_map = _default_map(cfg)


mode_option = click.option("--mode", type=click.Choice(MODES), envvar="JOINTNC_MODE", default=None,
                           help="Scalar mode (default: exact when the state allows; env JOINTNC_MODE).")


@main.group(invoke_without_command=True)
@click.option("--sx", default="0", show_default=True)
@click.option("--sy", default="0", show_default=True)
@click.option("--sz", default="0", show_default=True)
@click.option("--phi", type=float, default=None, help="Ancilla angle (default pi/4).")
@click.option("--exact-scheme", default=None, metavar="COS,SIN",
              help="Rational cos/sin pair for the ancilla, e.g. 3/5,4/5.")
@mode_option
@click.pass_context
def qubit(ctx, sx, sy, sz, phi, exact_scheme, mode):
    """Retrieved joint of sigma_x and sigma_y for a Bloch vector."""
    if ctx.invoked_subcommand is not None:
        return
    from .qubit import (QubitScheme, SingularKernel, is_nonclassical_some_axes, observed_joint,
                        retrieved_joint)
    from .states import BlochState

    try:
        comps = [_rational_or_float(v) for v in (sx, sy, sz)]
        if mode == FLOAT:
            comps = [float(c) for c in comps]
        s = BlochState(*comps)
        if exact_scheme:
            c, sn = (Fraction(v) for v in exact_scheme.split(","))
            scheme = QubitScheme.exact(c, sn)
        elif mode == RATIONAL or (mode is None and phi is None and s.is_exact):
            # the retrieved joint does not depend on the angle, so pick one with rational cos/sin
            scheme = QubitScheme.exact(Fraction(3, 5), Fraction(4, 5))
        else:
            scheme = QubitScheme(math.pi / 4 if phi is None else phi)
        grid = retrieved_joint(s, scheme)
    except (ValueError, SingularKernel) as e:
        _fail(str(e))
    rep = negativity(grid)
    diag = {
        "scheme": "qubit", "mode": grid.mode, "bloch": [_num(c) for c in comps],
        "observed": observed_joint(s, scheme).to_dict(),
        "negativity": rep.to_dict(),
        "negative_for_xy": bool(abs(s.sx) + abs(s.sy) > 1),
        "nonclassical_some_axes": is_nonclassical_some_axes(s),
    }
    _emit(ctx, grid, diag, "qubit")


@qubit.command("volume")
@click.option("--samples", type=int, default=1_000_000, show_default=True)
@click.option("--seed", type=int, default=1, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
def qubit_volume(samples, seed, workers):
    """Fraction of the Bloch ball revealed as nonclassical by some axes."""
    from .qubit import nonclassical_volume_fraction

    exact = nonclassical_volume_fraction("analytic")
    mc = nonclassical_volume_fraction("monte_carlo", samples, seed, workers=workers)
    click.echo(json.dumps({
        "analytic": exact.value,
        "monte_carlo": mc.value, "stderr": mc.stderr, "samples": samples, "seed": seed,
        "within_3_stderr": abs(mc.value - exact.value) <= 3 * mc.stderr,
    }, indent=1))


@main.command()
@click.option("--state", required=True, help="State spec, e.g. fock:7 or pats:k=1,nbar=1.")
@click.option("--cutoff", type=int, default=None, help="Side of the retrieved square (default automatic).")
@mode_option
@click.option("--tol", type=float, default=1e-12, show_default=True, help="Per-cell series tolerance.")
@click.pass_context
def nn(ctx, state, cutoff, mode, tol):
    """Number-number scheme: retrieve p(n1, n2) from two detectors behind a 50% splitter."""
    from .number_number import nn_retrieve, parity_wigner_origin

    try:
        d = _load_distribution(state, mode)
        res = nn_retrieve(d, cell_tolerance=tol, extent=cutoff)
    except ValueError as e:
        _fail(str(e))
    rep = negativity(res.joint)
    diag = dict(res.diagnostics, state=d.spec.text, scheme="nn", negativity=rep.to_dict(),
                source_cutoff=d.cutoff, source_tail_bound=d.tail_bound,
                parity_at_origin=_num(parity_wigner_origin(d)))
    # an automatic extent that hit its cap did not cover the requested grid
    _emit(ctx, res.joint, diag, "nn", res.converged and not res.truncated)


@main.command()
@click.option("--state", required=True)
@click.option("--ref-nbar", default="1", show_default=True, help="Mean photon number of the reference.")
@click.option("--m-def", "m_def", type=click.Choice(["normalized", "difference", "n1"]),
              default="normalized", show_default=True)
@click.option("--cutoff", type=int, default=None, help="Largest total count N (default automatic).")
@mode_option
@click.pass_context
def pn(ctx, state, ref_nbar, m_def, cutoff, mode):
    """Phase-number scheme: retrieve p(n, m) behind a coherent reference."""
    from .phase_number import (ReferenceBeam, pc_identity, pn_forward, pn_retrieve, to_ragged,
                               vacuum_verdict)

    try:
        nb = _rational_or_float(ref_nbar)
        if mode == FLOAT:
            nb = float(nb)
        d = _load_distribution(state, mode)
        fw = pn_forward(d, ReferenceBeam(nb), cutoff)
        r = pn_retrieve(to_ragged(fw, m_def), nb)
    except ValueError as e:
        _fail(str(e))
    verdict = vacuum_verdict(d, nb)
    diag = {"scheme": "pn", "state": d.spec.text, "mode": r.mode, "ref_nbar": str(nb), "m_def": m_def,
            "cutoff": r.cutoff, "negativity": negativity(r).to_dict(),
            "pc_identity": _num(pc_identity(d, nb)), "verdict": verdict.note,
            "nonclassical_by_vacuum": verdict.nonclassical}
    _emit(ctx, r, diag, "pn")


@main.command()
@click.option("--scheme", type=click.Choice(["qubit", "nn", "pn"]), required=True)
@click.option("--state", required=True, help="Bloch vector sx,sy,sz for qubit; state spec otherwise.")
@click.option("--shots", type=int, default=100_000, show_default=True)
@click.option("--seed", type=int, default=1, show_default=True)
@click.option("--bootstrap", type=int, default=1000, show_default=True, help="Bootstrap resamples.")
@click.option("--level", type=float, default=0.99, show_default=True)
@click.option("--cutoff", type=int, default=None, help="Forward-grid cutoff for nn / pn.")
@click.option("--ref-nbar", default="1", show_default=True)
@click.option("--phi", type=float, default=math.pi / 4, show_default=True)
@click.pass_context
def sample(ctx, scheme, state, shots, seed, bootstrap, level, cutoff, ref_nbar, phi):
    """Simulate finite-shot data, invert the frequencies and bootstrap the minimum cell."""
    from . import sampler

    try:
        if scheme == "qubit":
            from .qubit import QubitScheme, observed_joint
            from .states import BlochState

            comps = [float(_rational_or_float(v)) for v in state.removeprefix("bloch:").split(",")]
            qs = QubitScheme(phi)
            forward, inv = observed_joint(BlochState(*comps), qs), sampler.qubit_inverter(qs)
        elif scheme == "nn":
            from .number_number import nn_forward

            d = _load_distribution(state, FLOAT)
            K = cutoff if cutoff is not None else min(d.cutoff, 12)
            forward, inv = nn_forward(d, K).joint, sampler.nn_inverter(K)
        else:
            from .phase_number import ReferenceBeam, pn_forward, to_ragged

            nb = float(_rational_or_float(ref_nbar))
            d = _load_distribution(state, FLOAT)
            forward, inv = to_ragged(pn_forward(d, ReferenceBeam(nb), cutoff)), sampler.pn_inverter(nb)
        run = sampler.draw(forward, shots, seed, scheme)
        res = sampler.empirical_invert(run, inv, n_boot=bootstrap, level=level)
    except ValueError as e:
        _fail(str(e))
    report = {"run": run.to_dict(), "overflow_fraction": run.overflow / max(shots, 1),
              "inverted": res.grid.to_dict(), "min_cell": res.to_dict()}
    if ctx.obj["out"]:
        path = Path(ctx.obj["out"])
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(report, indent=1), encoding="utf-8")
        except OSError as e:
            _fail(str(e), "unwritable")
        click.echo(json.dumps({"written": [str(path)], "min_cell": res.to_dict()}))
    else:
        click.echo(json.dumps(report, indent=1))


@main.command()
@click.option("--figure", type=click.IntRange(1, 4), required=True)
@click.option("--out", "bundle_dir", default=None, help="Bundle directory (default: global --out, else ./figN).")
@click.pass_context
def reproduce(ctx, figure, bundle_dir):
    """Write the grid, renderings and a provenance manifest for one of the four figures."""
    from .recipes import RECIPES, run_recipe, write_bundle

    out = Path(bundle_dir or ctx.obj["out"] or f"fig{figure}")
    try:
        result = run_recipe(figure)
        manifest = write_bundle(result, out)
    except UnwritableOutput as e:
        _fail(str(e), "unwritable")
    click.echo(json.dumps({"figure": figure, "title": RECIPES[figure]["title"],
                           "files": manifest["files"], "converged": manifest["converged"]}, indent=1))
    if not manifest["converged"]:
        sys.exit(EXIT_UNCONVERGED)


@main.command()
@click.option("--nbar", "nbars", default="0.05,0.1,0.125,0.15,0.2,0.3", show_default=True,
              help="Comma-separated squeezed-vacuum mean photon numbers.")
@click.option("--extent", type=int, default=160, show_default=True)
@mode_option
def scan(nbars, extent, mode):
    """Stability of joint and marginal inversion for squeezed vacuum versus nbar."""
    from .number_number import nn_stability_scan
    from .states import SqueezedVacuum

    values = [float(x) for x in nbars.split(",") if x.strip()]
    rows = nn_stability_scan([SqueezedVacuum.from_nbar(v) for v in values], mode or FLOAT, extent=extent)
    click.echo(json.dumps([r.to_dict() for r in rows], indent=1))


def file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


if __name__ == "__main__":
    main()
