"""``satcert`` command line.

Exit codes: 0 certified / success, 1 clean negative (not certified,
ineligible), 2 input error, 3 backend indeterminate.
"""
from __future__ import annotations

import argparse
import json
import os
import sys as _sys

import numpy as np

from . import __version__, ancbi, fixtures, sim, symcore
from .checks import CheckReport, flag, nonstrict
from .forms import eval_form
from .micert import assemble_lmi, certify_mi, solve_lmi, vdot_Q_mi
from .satmodel import SaturatedSystem, UnsupportedLimitsError, acl
from .sdp import FEASIBLE, INDETERMINATE, BarrierBackend
from .sicert import (PrototypeKind, certify_si, detect_prototype, gain_conditions,
                     physical_prototype_certificate, vdot_Q_si)
from .sysfile import (SCHEMA_VERSION, InputError, dumps, input_hash, load_json, load_system,
                      system_from_dict, system_to_dict)

EXIT_OK, EXIT_NEGATIVE, EXIT_INPUT, EXIT_INDETERMINATE = 0, 1, 2, 3
DEFAULT_SEED = 0


def resolve_seed(flag_value=None) -> int:
    """``--seed`` if given, else ``SATCERT_SEED``, else 0."""
    if flag_value is not None:
        return int(flag_value)
    env = os.environ.get("SATCERT_SEED")
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise InputError(f"SATCERT_SEED must be an integer, got {env!r}") from None
    return DEFAULT_SEED


# ---------------------------------------------------------------------------
# argument helpers

def _json_arg(text, name):
    if text.startswith("@"):
        try:
            with open(text[1:]) as fh:
                text = fh.read()
        except OSError as e:
            raise InputError(f"--{name}: cannot read {text[1:]}: {e.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"--{name}: malformed JSON at column {e.colno}: {e.msg}") from None


def _num_array(text, name, shape=None):
    v = _json_arg(text, name)
    try:
        a = np.array(v, dtype=float)
    except (TypeError, ValueError):
        raise InputError(f"--{name}: expected numbers") from None
    if not np.all(np.isfinite(a)):
        raise InputError(f"--{name}: entries must be finite")
    if shape is not None:
        if a.ndim == 0 and shape == (1, 1):
            a = a.reshape(1, 1)
        if a.shape != shape:
            raise InputError(f"--{name}: expected shape {shape}, got {a.shape}")
    return a


def _x0_arg(text, n):
    text = text.strip()
    if text.startswith("[") or text.startswith("@"):
        a = np.atleast_1d(_num_array(text, "x0"))
    else:
        try:
            a = np.array([float(t) for t in text.split(",")])
        except ValueError:
            raise InputError(f"--x0: expected comma-separated numbers, got {text!r}") from None
    if a.size == 1:
        a = np.full(n, float(a[0]))
    if a.shape != (n,) or not np.all(np.isfinite(a)):
        raise InputError(f"--x0: expected {n} finite entries, got {a.size}")
    return a


def _load(args) -> SaturatedSystem:
    if args.fixture and args.system:
        raise InputError("give either a system file or --fixture, not both")
    if args.fixture:
        try:
            s = fixtures.get(args.fixture)
        except KeyError as e:
            raise InputError(str(e.args[0])) from None
    elif args.system:
        s = load_system(args.system)
    else:
        raise InputError("a system file or --fixture NAME is required")
    if getattr(args, "K", None):
        K = _num_array(args.K, "K")
        K = K.reshape(1, -1) if K.ndim == 1 else K
        if K.shape != s.K.shape:
            raise InputError(f"--K: expected shape {s.K.shape}, got {K.shape}")
        s = s.with_gain(K)
    return s


def _unit(s: SaturatedSystem) -> tuple:
    if s.limits.is_unit:
        return s, False
    try:
        return s.normalize_limits(), True
    except UnsupportedLimitsError as e:
        raise InputError(str(e)) from None


def _header(command, s, seed) -> dict:
    return {"schema_version": SCHEMA_VERSION, "kind": "satcert-report", "command": command,
            "tool": {"name": "satcert", "version": __version__},
            "input_hash": input_hash(s), "seed": seed}


def _emit(args, obj):
    text = dumps(obj)
    out = getattr(args, "out", None)
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        _sys.stdout.write(text)


# ---------------------------------------------------------------------------
# analyze

def cmd_analyze(args) -> int:
    s = _load(args)
    seed = resolve_seed(args.seed)
    st = ancbi.spectral_structure(s.A0)
    Acl = acl(s)
    re = float(np.max(np.linalg.eigvals(Acl).real))
    hurwitz = re < -1e-9 * max(1.0, symcore.norm2(Acl))
    rep = CheckReport()
    rep.add(flag("no open right half-plane eigenvalue", not st.has_open_RHP))
    rep.add(flag("zero eigenvalue blocks of size <= 2", not st.origin_block_gt2))
    rep.add(flag("imaginary-axis eigenvalues simple", not st.imaginary_nonsimple))
    rep.add(flag("A_cl Hurwitz", hurwitz))
    body = {"eligible": st.eligible, "spectrum": st.to_dict(), "A_cl_hurwitz": hurwitz,
            "max_real_eig_Acl": re}
    if st.eligible:
        try:
            c4 = ancbi.synthesize_P0(s.A0)
            body["P0_example"] = {"P0": c4.P0.tolist(), "valid": c4.check(),
                                  "transformation_condition": c4.cond_T}
        except (ancbi.IllConditionedError, ancbi.ClusteringError) as e:
            body["P0_example"] = {"error": str(e)}
    try:
        protos = detect_prototype(_unit(s)[0])
    except InputError:
        protos = []
    body["prototypes"] = [p.kind.value for p in protos]
    verdict = "eligible" if st.eligible else "ineligible"
    out = _header("analyze", s, seed)
    out.update({"verdict": verdict, "checks": rep.to_dict(), "analysis": body,
                "system": system_to_dict(s)})
    _emit(args, out)
    return EXIT_OK if st.eligible and hurwitz else EXIT_NEGATIVE


# ---------------------------------------------------------------------------
# certify

def _sample_vdot(form, n, seed, count=2000) -> float:
    """Smallest ``Y / (max(1,|Q|) |xi|^2)`` over seeded samples of
    ``Y = xi'Q xi`` (``Vdot = -Y/2``)."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((count, n))
    X *= (10.0 ** rng.uniform(-2, 3, count) / np.linalg.norm(X, axis=1))[:, None]
    xi = form.xi(X)
    Y = eval_form(form, X)
    q = max(1.0, symcore.norm2(form.Q))
    return float(np.min(Y / (q * np.sum(xi * xi, axis=1))))


def _certificate_from_report(path) -> tuple:
    d = load_json(path)
    if not isinstance(d, dict) or d.get("kind") != "satcert-report" or "certificate" not in d:
        raise InputError(f"{path}: not a satcert certify report")
    if d.get("schema_version") != SCHEMA_VERSION:
        raise InputError(f"{path}: unsupported schema_version {d.get('schema_version')!r}")
    c = d["certificate"]
    if not c:
        raise InputError(f"{path}: report carries no certificate")
    return d.get("method"), c, d


def _si_inputs(args, s, rep) -> tuple:
    if args.from_report:
        method, c, _ = _certificate_from_report(args.from_report)
        if method != "si":
            raise InputError(f"{args.from_report}: holds a '{method}' certificate, not 'si'")
        return np.array(c["P0"], float), float(c["h"]), None
    if args.P0 is not None or args.h is not None:
        if args.P0 is None or args.h is None:
            raise InputError("--P0 and --h go together")
        return _num_array(args.P0, "P0", (s.n, s.n)), float(args.h), None
    protos = detect_prototype(s)
    if args.prototype:
        protos = [p for p in protos if p.kind.value == args.prototype]
        if not protos:
            raise InputError(f"system does not match the '{args.prototype}' prototype")
    if not protos:
        raise InputError("no prototype matches (A0, B); give --P0 and --h")
    if len(protos) > 1:
        raise InputError("several prototypes match (A0, B): "
                         + ", ".join(p.kind.value for p in protos) + "; pass --prototype")
    p = protos[0]
    with np.errstate(all="raise"):
        try:
            P0, h, Kn = physical_prototype_certificate(p, s.K, check_domain=False)
        except (ZeroDivisionError, FloatingPointError, symcore.NonFiniteError):
            P0, h, Kn = None, None, None
    if Kn is None:
        Kn = s.K.ravel()
    for name, ok in gain_conditions(p.kind, Kn):
        rep.add(flag("gain " + name, bool(ok)))
    return P0, h, p


def _mi_inputs(args, s) -> tuple:
    if args.from_report:
        method, c, _ = _certificate_from_report(args.from_report)
        if method not in ("mi", "lmi"):
            raise InputError(f"{args.from_report}: holds a '{method}' certificate, not 'mi'")
        return np.array(c["P0"], float), np.array(c["Hp"], float), np.array(c["Hn"], float)
    if args.P0 is None or args.Hp is None:
        raise InputError("--method mi needs --P0 and --Hp (and optionally --Hn)")
    P0 = _num_array(args.P0, "P0", (s.n, s.n))
    Hp = np.atleast_1d(_num_array(args.Hp, "Hp"))
    Hn = np.zeros(s.m) if args.Hn is None else np.atleast_1d(_num_array(args.Hn, "Hn"))
    if Hp.shape != (s.m,) or Hn.shape != (s.m,):
        raise InputError(f"--Hp/--Hn: expected {s.m} entries")
    return P0, Hp, Hn


def cmd_certify(args) -> int:
    s0 = _load(args)
    seed = resolve_seed(args.seed)
    s, normalized = _unit(s0)
    method = args.method
    rep = CheckReport()
    extra = {}
    status = None
    if args.from_report and method == "lmi":
        method = "mi"  # re-verification of a stored certificate
        extra["reverified_from"] = "lmi"
    if method == "si":
        if s.m != 1:
            raise InputError(f"--method si needs a single input, system has m={s.m}")
        P0, h, proto = _si_inputs(args, s, rep)
        if proto is not None:
            extra["prototype"] = proto.kind.value
        if P0 is None:
            rep.add(flag("closed-form certificate defined", False))
        else:
            inner = certify_si(s, P0, h)
            rep.conditions.extend(inner.conditions)
            rep.certificate = inner.certificate
    elif method == "mi":
        P0, Hp, Hn = _mi_inputs(args, s)
        inner = certify_mi(s, P0, Hp, Hn)
        rep.conditions.extend(inner.conditions)
        rep.certificate = inner.certificate
        extra["kernel_inclusion"] = inner.data.get("kernel_inclusion")
    else:
        backend = BarrierBackend()
        if args.backend == "cvxpy":
            from .sdp import CvxpyBackend
            backend = CvxpyBackend()
        prob = assemble_lmi(s)
        sol = solve_lmi(prob, backend)
        status = sol.status
        extra["lmi"] = {"status": sol.status, "backend": sol.backend, "kappa": sol.kappa,
                        "iterations": sol.iterations, "time_scale": prob.alpha,
                        "implied_constraints": prob.implied}
        rep.add(flag("LMI feasible", sol.status == FEASIBLE, sol.status))
        if sol.verification is not None:
            rep.conditions.extend(sol.verification.conditions)
            rep.certificate = sol.verification.certificate
    cert = rep.certificate
    if cert is not None and rep.passed:
        form = vdot_Q_si(cert, s) if method == "si" else vdot_Q_mi(cert, s)
        rep.add(nonstrict("Vdot <= 0 (sampled)", _sample_vdot(form, s.n, seed), 1e-9))
    if status == INDETERMINATE:
        verdict, code = "indeterminate", EXIT_INDETERMINATE
    elif rep.passed and cert is not None:
        verdict, code = "certified", EXIT_OK
    else:
        verdict, code = "not certified", EXIT_NEGATIVE
    c = None
    if cert is not None:
        c = cert.to_dict()
        if args.method == "lmi" and "lmi" in extra:
            c["kappa"] = extra["lmi"]["kappa"]
    out = _header("certify", s0, seed)
    out.update({"method": args.method, "verdict": verdict, "certificate": c,
                "checks": rep.to_dict(), "details": extra, "limits_normalized": normalized,
                "system": system_to_dict(s)})
    _emit(args, out)
    return code


# ---------------------------------------------------------------------------
# simulate

def _V_columns(paths, s) -> dict:
    cols = {}
    for path in paths or []:
        method, c, d = _certificate_from_report(path)
        rs = system_from_dict(d["system"], path)
        scale = max(1.0, symcore.norm2(s.A0), symcore.norm2(s.B), symcore.norm2(s.K))
        # the report's loop may be the limit-normalized version of this one
        su = _unit(s)[0]
        if any(np.max(np.abs(a - b)) > 1e-12 * scale
               for a, b in ((rs.A0, su.A0), (rs.B, su.B), (rs.K, su.K))):
            raise InputError(f"{path}: certificate was produced for a different system")
        h = np.array([c["h"]]) if method == "si" else np.array(c["Hp"]) - np.array(c["Hn"])
        V = sim.quadratic_sat_V(np.array(c["P0"]), h, rs.K, rs.limits)
        name = method
        k = 2
        while name in cols:
            name = f"{method}_{k}"
            k += 1
        cols[name] = V
    return cols


def cmd_simulate(args) -> int:
    s = _load(args)
    x0 = _x0_arg(args.x0, s.n)
    try:
        dt = sim.check_dt(s, sim.default_dt(s) if args.dt is None else args.dt)
    except sim.StepSizeError as e:
        raise InputError(f"refused: {e}") from None
    Vs = _V_columns(args.V, s)
    T = args.T if args.T is not None else sim.horizon(s, x0)
    if not T >= 0:
        raise InputError("--T must be nonnegative")
    traj = sim.integrate(s, x0, T, dt, richardson=not args.no_richardson)
    series = {k: V(traj.x) for k, V in Vs.items()}
    stride = max(1, int(args.stride))
    idx = np.arange(0, len(traj), stride)
    if idx[-1] != len(traj) - 1:
        idx = np.append(idx, len(traj) - 1)
    sub = sim.Trajectory(traj.t[idx], traj.x[idx], traj.u[idx], traj.s[idx], traj.dt,
                         traj.richardson)
    cols = None
    if len(series) == 1 and not args.named_V:
        cols = next(iter(series.values()))[idx]
    elif series:
        cols = {k: v[idx] for k, v in series.items()}
    path = sub.to_csv(args.out, cols)
    summary = {"csv": path, "samples": len(traj), "written": int(idx.size), "dt": dt, "T": T,
               "richardson": traj.richardson,
               "V": {k: {"max_increment": float(np.max(np.diff(v))) if v.size > 1 else 0.0,
                         "V0": float(v[0])} for k, v in series.items()}}
    _sys.stdout.write(dumps(summary))
    return EXIT_OK


# ---------------------------------------------------------------------------
# fixtures

def cmd_fixtures(args) -> int:
    if args.action == "list":
        _sys.stdout.write("\n".join(fixtures.FIXTURE_NAMES) + "\n")
        return EXIT_OK
    if not args.name:
        raise InputError("fixtures emit needs a fixture name")
    try:
        s = fixtures.get(args.name)
    except KeyError as e:
        raise InputError(str(e.args[0])) from None
    _emit(args, system_to_dict(s))
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="satcert",
                                description="Lyapunov certificates for saturated linear feedback.")
    p.add_argument("--version", action="version", version=f"satcert {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def system_args(q):
        q.add_argument("system", nargs="?", help="system file (JSON)")
        q.add_argument("--fixture", help="use a built-in system instead of a file")
        q.add_argument("--K", help="replace the gain (JSON matrix)")
        q.add_argument("--seed", type=int, default=None,
                       help="PRNG seed (default: SATCERT_SEED, else 0)")

    q = sub.add_parser("analyze", help="eligibility of A0 and Hurwitz test of A_cl")
    system_args(q)
    q.add_argument("-o", "--out", help="write the report here instead of stdout")
    q.set_defaults(func=cmd_analyze)

    q = sub.add_parser("certify", help="check or construct a certificate")
    system_args(q)
    q.add_argument("--method", choices=("si", "mi", "lmi"), required=True)
    q.add_argument("--P0", help="JSON matrix (or @file)")
    q.add_argument("--h", type=float)
    q.add_argument("--Hp", help="JSON list of diagonal entries")
    q.add_argument("--Hn", help="JSON list of diagonal entries")
    q.add_argument("--prototype", choices=[k.value for k in PrototypeKind])
    q.add_argument("--from-report", help="re-verify the certificate stored in a report")
    q.add_argument("--backend", choices=("builtin", "cvxpy"), default="builtin")
    q.add_argument("-o", "--out", help="write the report here instead of stdout")
    q.set_defaults(func=cmd_certify)

    q = sub.add_parser("simulate", help="integrate the loop and write a CSV trajectory")
    system_args(q)
    q.add_argument("--x0", required=True, help="comma list, JSON list, or one number")
    q.add_argument("--T", type=float, help="duration (default: horizon policy)")
    q.add_argument("--dt", type=float, help="step (default 0.1/L)")
    q.add_argument("--V", action="append", help="certify report whose V to add as a column")
    q.add_argument("--named-V", action="store_true", help="name a single V column V_<method>")
    q.add_argument("--stride", type=int, default=1, help="write every k-th sample")
    q.add_argument("--no-richardson", action="store_true")
    q.add_argument("-o", "--out", default="trajectory.csv")
    q.set_defaults(func=cmd_simulate)

    q = sub.add_parser("fixtures", help="list or emit built-in systems")
    q.add_argument("action", choices=("list", "emit"))
    q.add_argument("name", nargs="?")
    q.add_argument("-o", "--out")
    q.set_defaults(func=cmd_fixtures)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (InputError, ValueError, UnsupportedLimitsError) as e:
        _sys.stderr.write(f"satcert: error: {e}\n")
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
