"""Command-line front end.

Every run emits a report envelope: tool version, the command echo, the seed,
wall time, a status (ok / flagged / error) and an operation-specific payload.
Payloads are deterministic for fixed inputs and seed; wall time lives only in
the envelope.  Exit codes: 0 ok, 2 flagged (an honest "undecided" or
non-converged answer somewhere in the payload), 1 error.

Calibrations are given either as ``builtin:<name>?<params>`` URIs (for
example ``builtin:kahler?n=2``) or as paths to calibration JSON files;
a path takes precedence only when the argument is not a builtin URI.
Structured inputs (jets, vectors, bases) are inline JSON or ``@file``.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import __version__
from .catalog import (
    calibration_to_dict,
    load_calibration,
    parse_builtin,
    save_calibration,
)
from .cones import (
    check_certificate,
    hyperplane_boundary_test,
    lambda_span,
    normality_check,
    pluriharmonic_mod_d_test,
    positive_cone_membership,
)
from .convexity import (
    HullProblem,
    SurfaceJet,
    boundary_margin,
    dist_sq_jet,
    free_test,
    quad_hull_membership,
    torus_scan,
)
from .exterior import Multivector, form_from_dict, form_to_dict
from .grassmann import OptOptions, calibrated_planes, comass, plane_from_dict, plane_to_dict
from .pshcheck import (
    ellipticity_report,
    jet_from_dict,
    jet_to_dict,
    nonconvex_psh_witness,
    phi_laplacian,
    pluriharmonic_quadratic_space,
    psh_classify,
    richness_check,
)
from .verify import run_suite

FLAG_WORDS = ("undecided", "indeterminate", "non_converged", "not_found")


def _load_structured(arg: str):
    """Inline JSON, or @path to a JSON file."""
    if arg.startswith("@"):
        with open(arg[1:]) as fh:
            return json.load(fh)
    return json.loads(arg)


def _load_calibration_arg(arg: str):
    if arg.startswith("builtin:"):
        return parse_builtin(arg)
    return load_calibration(arg)


def _opts(args) -> OptOptions:
    kw = {}
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    if getattr(args, "restarts", None) is not None:
        kw["restarts"] = args.restarts
    if getattr(args, "tol_plane", None) is not None:
        kw["tol_plane"] = args.tol_plane
    return OptOptions(**kw)


def _contains_flag(obj) -> bool:
    if isinstance(obj, str):
        return obj in FLAG_WORDS
    if isinstance(obj, dict):
        return any(_contains_flag(v) for v in obj.values())
    if isinstance(obj, (list, tuple)):
        return any(_contains_flag(v) for v in obj)
    return False


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, float) and x != x:
        return None
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, int, float, str)) or x is None:
        return x
    if hasattr(x, "to_dict"):
        return _jsonable(x.to_dict())
    return str(x)


# ---------------------------------------------------------------------------
# subcommand handlers: each returns a payload dict
# ---------------------------------------------------------------------------


def _cmd_comass(args):
    cal = _load_calibration_arg(args.calibration)
    rep = comass(cal.form, _opts(args))
    return rep.to_dict()


def _cmd_planes(args):
    cal = _load_calibration_arg(args.calibration)
    planes = calibrated_planes(cal, args.count, _opts(args))
    return {"count": len(planes), "planes": [plane_to_dict(pl) for pl in planes]}


def _cmd_check_psh(args):
    cal = _load_calibration_arg(args.calibration)
    jet = jet_from_dict(_load_structured(args.jet))
    rep = psh_classify(jet, cal, tol=args.tol, opts=_opts(args))
    return rep.to_dict()


def _cmd_laplacian(args):
    cal = _load_calibration_arg(args.calibration)
    jet = jet_from_dict(_load_structured(args.jet))
    return {"laplacian": phi_laplacian(jet, cal)}


def _cmd_ellipticity(args):
    cal = _load_calibration_arg(args.calibration)
    return ellipticity_report(cal, seed=args.seed)


def _cmd_witness(args):
    cal = _load_calibration_arg(args.calibration)
    Q = nonconvex_psh_witness(cal, seed=args.seed, opts=_opts(args))
    if Q is None:
        return {"found": False, "witness": "not_found"}
    return {"found": True, "Q": Q.tolist(),
            "min_eigenvalue": float(np.linalg.eigvalsh(Q)[0])}


def _cmd_plh_space(args):
    cal = _load_calibration_arg(args.calibration)
    qs = pluriharmonic_quadratic_space(cal, samples=args.samples, seed=args.seed)
    return {
        "dimension": qs.dimension,
        "residual": qs.residual,
        "rank_gap": qs.rank_gap,
        "stable": qs.stable,
        "basis": [Q.tolist() for Q in qs.basis],
    }


def _cmd_richness(args):
    cal = _load_calibration_arg(args.calibration)
    P = np.asarray(_load_structured(args.plane2), dtype=float)
    ell = np.asarray(_load_structured(args.line), dtype=float)
    out = richness_check(cal, P, ell, opts=_opts(args))
    return {"found": out["found"], "value": out["value"],
            "xi0": plane_to_dict(out["xi0"]) if out["xi0"] is not None else None}


def _cmd_cone(args):
    cal = _load_calibration_arg(args.calibration)
    if args.hyperplane_e is not None:
        e = np.asarray(_load_structured(args.hyperplane_e), dtype=float)
        return hyperplane_boundary_test(cal, e, opts=_opts(args))
    d = _load_structured(args.target)
    if "frame" in d:
        target = plane_from_dict(d).plucker
    else:
        target = form_from_dict(d, kind=Multivector)
    cert = positive_cone_membership(target, cal, _opts(args))
    out = cert.to_dict()
    out["recheck"] = check_certificate(cert, target, cal) \
        if cert.verdict != "undecided" else None
    return out


def _cmd_span(args):
    cal = _load_calibration_arg(args.calibration)
    s = lambda_span(cal, samples=args.samples, seed=args.seed)
    return {"rank": s.rank, "ambient": s.ambient,
            "singular_values": s.singular_values.tolist(),
            "rank_gap": s.rank_gap, "stable": s.stable}


def _cmd_normality(args):
    cal = _load_calibration_arg(args.calibration)
    return normality_check(cal, trials=args.trials, seed=args.seed)


def _cmd_plh_mod_d(args):
    cal = _load_calibration_arg(args.calibration)
    jet = jet_from_dict(_load_structured(args.jet))
    out = pluriharmonic_mod_d_test(jet, cal, opts=_opts(args))
    return {"residual": out["residual"],
            "alpha": form_to_dict(out["alpha"]),
            "sigma_norm": out["sigma_norm"],
            "gradient_degenerate": out["gradient_degenerate"]}


def _cmd_boundary(args):
    cal = _load_calibration_arg(args.calibration)
    jet = jet_from_dict(_load_structured(args.jet))
    rep = boundary_margin(SurfaceJet(jet), cal, tol=args.tol, opts=_opts(args))
    return rep.to_dict()


def _cmd_torus_scan(args):
    out = torus_scan(args.R, args.r, resolution=args.resolution,
                     opts=_opts(args))
    payload = {k: v for k, v in out.items() if k != "rows"}
    payload["rows"] = len(out["rows"])
    if args.format == "csv":
        payload["csv"] = _torus_csv(out["rows"])
    return payload


def _torus_csv(rows) -> str:
    lines = ["u,v,x,y,z,vacuous,margin"]
    for (a, b, x, y, z, vac, margin) in rows:
        m = "" if margin != margin else f"{margin!r}"
        lines.append(f"{a!r},{b!r},{x!r},{y!r},{z!r},{int(vac)},{m}")
    return "\n".join(lines) + "\n"


def _cmd_free(args):
    cal = _load_calibration_arg(args.calibration)
    T = np.asarray(_load_structured(args.subspace), dtype=float)
    return free_test(T, cal, opts=_opts(args))


def _cmd_dist_jet(args):
    surface = _load_structured(args.surface)
    x = np.asarray(_load_structured(args.point), dtype=float)
    return jet_to_dict(dist_sq_jet(surface, x))


def _cmd_hull(args):
    cal = _load_calibration_arg(args.calibration)
    points = np.asarray(_load_structured(args.points), dtype=float)
    query = np.asarray(_load_structured(args.query), dtype=float)
    out = quad_hull_membership(HullProblem(points, query, cal), opts=_opts(args))
    if out.get("inside") is None:
        out["verdict"] = "undecided"
    out["note"] = "quadratic hull contains the full psh hull"
    return out


def _cmd_verify(args):
    return run_suite(args.suite, seed=args.seed)


HANDLERS = {
    "comass": _cmd_comass,
    "planes": _cmd_planes,
    "check-psh": _cmd_check_psh,
    "laplacian": _cmd_laplacian,
    "ellipticity": _cmd_ellipticity,
    "witness": _cmd_witness,
    "plh-space": _cmd_plh_space,
    "richness": _cmd_richness,
    "cone": _cmd_cone,
    "span": _cmd_span,
    "normality": _cmd_normality,
    "plh-mod-d": _cmd_plh_mod_d,
    "boundary": _cmd_boundary,
    "torus-scan": _cmd_torus_scan,
    "free": _cmd_free,
    "dist-jet": _cmd_dist_jet,
    "hull": _cmd_hull,
    "verify": _cmd_verify,
}


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="calgeo",
        description="calibrated-geometry computations with reproducible reports",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, calibration=True):
        if calibration:
            sp.add_argument("--calibration", required=True,
                            help="builtin:<name>?<params> or a JSON file path")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--restarts", type=int, default=None)
        sp.add_argument("--tol", type=float, default=1e-6)
        sp.add_argument("--tol-plane", dest="tol_plane", type=float, default=None)
        sp.add_argument("--out", default=None, help="report path (default stdout)")
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        sp.add_argument("--threads", type=int, default=1,
                        help="recorded in the report; results are "
                             "thread-count independent")

    sp = sub.add_parser("comass", help="maximize the form over the Grassmannian")
    common(sp)
    sp = sub.add_parser("planes", help="find calibrated planes")
    common(sp)
    sp.add_argument("--count", type=int, default=8)
    sp = sub.add_parser("check-psh", help="classify a jet")
    common(sp)
    sp.add_argument("--jet", required=True, help="inline JSON or @file")
    sp = sub.add_parser("laplacian", help="calibration Laplacian of a jet")
    common(sp)
    sp.add_argument("--jet", required=True)
    sp = sub.add_parser("ellipticity", help="symbol nondegeneracy report")
    common(sp)
    sp = sub.add_parser("witness", help="non-convex plurisubharmonic witness")
    common(sp)
    sp = sub.add_parser("plh-space", help="pluriharmonic quadratic space")
    common(sp)
    sp.add_argument("--samples", type=int, default=None)
    sp = sub.add_parser("richness", help="complete a line to a calibrated plane")
    common(sp)
    sp.add_argument("--plane2", required=True, help="n x 2 orthonormal basis")
    sp.add_argument("--line", required=True, help="unit vector inside the 2-plane")
    sp = sub.add_parser("cone", help="cone membership / hyperplane boundary")
    common(sp)
    sp.add_argument("--target", default=None,
                    help="plane JSON or multivector JSON")
    sp.add_argument("--hyperplane-e", dest="hyperplane_e", default=None,
                    help="unit vector for the boundary test")
    sp = sub.add_parser("span", help="span of the calibrated planes")
    common(sp)
    sp.add_argument("--samples", type=int, default=None)
    sp = sub.add_parser("normality", help="hyperplane-restriction normality")
    common(sp)
    sp.add_argument("--trials", type=int, default=3)
    sp = sub.add_parser("plh-mod-d", help="pluriharmonic mod d decomposition")
    common(sp)
    sp.add_argument("--jet", required=True)
    sp = sub.add_parser("boundary", help="boundary convexity of a surface jet")
    common(sp)
    sp.add_argument("--jet", required=True, help="jet of a defining function")
    sp = sub.add_parser("torus-scan", help="scan the torus for convexity")
    common(sp, calibration=False)
    sp.add_argument("--R", type=float, required=True)
    sp.add_argument("--r", type=float, required=True)
    sp.add_argument("--resolution", type=int, default=16)
    sp = sub.add_parser("free", help="free / isotropic test for a subspace")
    common(sp)
    sp.add_argument("--subspace", required=True, help="n x k orthonormal basis")
    sp = sub.add_parser("dist-jet", help="jet of half squared distance")
    common(sp, calibration=False)
    sp.add_argument("--surface", required=True)
    sp.add_argument("--point", required=True)
    sp = sub.add_parser("hull", help="quadratic hull membership")
    common(sp)
    sp.add_argument("--points", required=True)
    sp.add_argument("--query", required=True)
    sp = sub.add_parser("verify", help="run registered invariant suites")
    common(sp, calibration=False)
    sp.add_argument("--suite", default="all",
                    choices=("identities", "cones", "convexity", "all"))
    return ap


def run(argv=None) -> int:
    """Entry point: parse, dispatch, write the report, return the exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = _build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    t0 = time.time()
    envelope = {
        "tool": "calgeo",
        "version": __version__,
        "command": argv,
        "seed": getattr(args, "seed", None),
        "threads": getattr(args, "threads", 1),
    }
    try:
        payload = HANDLERS[args.command](args)
    except (ValueError, FileNotFoundError, KeyError, RuntimeError) as e:
        envelope["status"] = "error"
        envelope["error"] = f"{type(e).__name__}: {e}"
        envelope["wall_time_s"] = time.time() - t0
        sys.stderr.write(envelope["error"] + "\n")
        if getattr(args, "out", None):
            _write_report(args.out, envelope)
        return 1
    payload = _jsonable(payload)
    flagged = _contains_flag(payload) or payload.get("all_passed") is False
    envelope["status"] = "flagged" if flagged else "ok"
    envelope["payload"] = payload
    envelope["wall_time_s"] = time.time() - t0
    _write_report(getattr(args, "out", None), envelope)
    return 2 if flagged else 0


def _write_report(out_path, envelope) -> None:
    text = json.dumps(envelope, sort_keys=True, indent=1)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def main() -> None:
    raise SystemExit(run())
