"""Command-line front end.  Every command prints a JSON report.

Exit codes: 0 all checks pass, 1 a check failed, 2 bad input, 3 internal error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Any

import numpy as np

from .conversion import (
    BinaryDistribution,
    apply_filter,
    branch_checks,
    filtered_conversion,
    output_fidelity,
    plan_deterministic,
    plan_filter,
    sample_filter,
)
from .distillation import filter_distill_mc, filter_distill_rate, multicopy_distill
from .errors import CausalForgeError, ConstraintError, DesignSearchError
from .freeops import (
    V_ORDER,
    LoaeSpec,
    LoaeTerm,
    apply_operator,
    build_loae,
    build_pls,
    check_nso,
    check_swapped_conditions,
    v_conditions,
)
from .io import read_process, write_process
from .linalg import PureProcess, fidelity
from .process import (
    A_TO_B,
    B_TO_A,
    DEFAULT_TOL,
    PROCESS_ORDER,
    as_process,
    is_compatible_order,
    is_entangled_control_target,
    is_valid_process,
    link_product,
    link_vectors,
)
from .switches import (
    GeneralizedSwitchSpec,
    check_switch_constraints,
    make_fixed_order,
    make_generalized_switch,
    make_quantum_switch,
    make_w_ent,
)

EXIT_PASS, EXIT_FAIL, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3

NAMED_UNITARIES = {
    "I": np.eye(2),
    "X": np.array([[0, 1], [1, 0]]),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.diag([1, -1]),
    "H": np.array([[1, 1], [1, -1]]) / np.sqrt(2),
}


class InputError(CausalForgeError, ValueError):
    code = "BAD_INPUT"


class Report:
    def __init__(self, argv: list[str], seed: int | None = None):
        self.command = list(argv)
        self.checks: list[dict[str, Any]] = []
        self.values: dict[str, Any] = {}
        self.seed = seed
        self.error: dict[str, str] | None = None

    def check(self, name: str, residual: float, tolerance: float) -> bool:
        residual = float(residual)
        ok = bool(residual <= tolerance)
        self.checks.append({"name": name, "residual": residual,
                            "tolerance": float(tolerance), "pass": ok})
        return ok

    @property
    def passed(self) -> bool:
        return self.error is None and all(c["pass"] for c in self.checks)

    def to_dict(self) -> dict[str, Any]:
        out = {"command": self.command, "checks": self.checks, "values": _jsonable(self.values),
               "seed": self.seed, "pass": self.passed}
        if self.error is not None:
            out["error"] = self.error
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


# --- argument helpers ----------------------------------------------------------

def parse_unitary(text: str, d: int) -> np.ndarray:
    """Named gate (I, X, Y, Z, H for d=2) or inline JSON rows of [re, im] pairs."""
    if text in NAMED_UNITARIES:
        if d != 2:
            raise InputError(f"named unitary {text!r} only exists for d=2")
        return NAMED_UNITARIES[text].astype(complex)
    try:
        rows = json.loads(text)
        m = np.array(rows, dtype=float)
    except (json.JSONDecodeError, ValueError, TypeError):
        raise InputError(f"cannot parse unitary {text!r}") from None
    if m.shape != (d, d, 2):
        raise InputError(f"unitary must be {d}x{d} [re, im] pairs, got shape {m.shape}")
    return m[..., 0] + 1j * m[..., 1]


def parse_basis(text: str) -> np.ndarray:
    if text == "computational":
        return np.eye(2)
    if text == "hadamard":
        return NAMED_UNITARIES["H"]
    return parse_unitary(text, 2)


def _dist(values, flag: str) -> BinaryDistribution:
    if values is None:
        raise InputError(f"{flag} is required")
    return BinaryDistribution(*values)


def _spec(args, p: BinaryDistribution, rng: np.random.Generator | None = None) -> GeneralizedSwitchSpec:
    if rng is not None:
        return GeneralizedSwitchSpec.random(args.d, tuple(p), rng)
    us = {}
    for name in ("u_PA", "u_AB", "u_BF", "u_PB", "u_BA", "u_AF"):
        text = getattr(args, name, None)
        us[name] = parse_unitary(text, args.d) if text else np.eye(args.d)
    return GeneralizedSwitchSpec(tuple(p), parse_basis(getattr(args, "basis", "computational")), **us)


def _validity_checks(report: Report, w, tol: float) -> None:
    rep = is_valid_process(w, tol)
    for name, r in rep.checks():
        report.check(f"validity.{name}", r, tol)
    report.values["trace"] = rep.trace_value
    report.values["trace_expected"] = rep.trace_expected


def _order_values(report: Report, w, tol: float) -> None:
    for order in (A_TO_B, B_TO_A):
        ok, r = is_compatible_order(w, order, tol)
        report.values[f"order.{order}"] = {"compatible": ok, "residual": r}


def _entanglement_values(report: Report, w, tol: float) -> None:
    ent, lam = is_entangled_control_target(w, tol)
    report.values["entangled"] = ent
    report.values["min_ppt_eigenvalue"] = lam


def _v_checks(report: Report, op, tol: float, nso: bool) -> None:
    cond = v_conditions(op)
    for name in ("trace", "inputs_outputs", "labs_separate"):
        report.check(f"v.{name}", cond[name], tol)
    report.values["v.control_separate"] = cond["control_separate"]
    if nso:
        _, r = check_nso(op, tol)
        for label, x in zip("abcd", r):
            report.check(f"nso.{label}", x, tol)
        report.values["swapped_conditions"] = list(check_swapped_conditions(op, tol)[1])


def _write(args, x) -> None:
    if getattr(args, "out", None):
        write_process(args.out, x)


# --- commands ------------------------------------------------------------------

def cmd_build(args, report: Report) -> None:
    kind, tol = args.kind, args.tol
    if kind in ("pls", "loae"):
        if kind == "pls":
            q = args.swap_prob
            if not 0 <= q <= 1:
                raise InputError("--swap-prob must lie in [0, 1]")
            op = build_pls([(1 - q, False), (q, True)], d=args.d)
        else:
            rng = np.random.default_rng(args.seed)
            op = build_loae(LoaeSpec((LoaeTerm.random(args.d, rng, args.ancilla_dim),)))
        _v_checks(report, op, tol, nso=kind == "loae")
        _write(args, op.assembled)
        return
    if kind == "switch":
        w = make_quantum_switch(args.d)
    elif kind == "fixed-order":
        w = make_fixed_order(args.bit, args.d)
    elif kind == "w_ent":
        w = make_w_ent(args.d, parse_unitary(args.u_AB or "X", args.d))
    else:
        p = _dist(args.p or (0.5, 0.5), "--p")
        spec = _spec(args, p)
        ok, r = check_switch_constraints(spec, tol)
        report.values["constraint_residuals"] = list(r)
        report.values["constraints_satisfied"] = ok
        if args.require_constraints and not ok:
            raise ConstraintError(f"constraint residuals {r[0]:.3e}, {r[1]:.3e} exceed {tol:.1e}")
        w = make_generalized_switch(spec)
    report.values["norm_sq"] = w.norm_sq()
    report.values["entries"] = int(w.data.size)
    _validity_checks(report, w, tol)
    _write(args, w)


def _load(path):
    return read_process(path)


def _is_process(x) -> bool:
    return sorted(x.names) == sorted(PROCESS_ORDER)


def _is_operation(x) -> bool:
    return sorted(x.names) == sorted(V_ORDER)


def cmd_check(args, report: Report) -> None:
    x = _load(args.inp[0])
    tol = args.tol
    if _is_process(x):
        if args.nso:
            raise InputError("--nso needs a free-operation file")
        _validity_checks(report, x, tol)
        if args.order:
            _order_values(report, x, tol)
        if args.entanglement:
            _entanglement_values(report, x, tol)
    elif _is_operation(x):
        _v_checks(report, x, tol, args.nso)
    else:
        raise InputError(f"factors {x.names} are neither a process nor a free operation")


def cmd_link(args, report: Report) -> None:
    if len(args.inp) != 2:
        raise InputError("link needs exactly two --in files")
    a, b = (_load(p) for p in args.inp)
    if isinstance(a, PureProcess) and isinstance(b, PureProcess):
        r = link_vectors(a, b)
        report.values["norm_sq"] = r.norm_sq()
    else:
        a = a.outer() if isinstance(a, PureProcess) else a
        b = b.outer() if isinstance(b, PureProcess) else b
        r = link_product(a, b)
        report.values["trace"] = r.trace().real
    report.values["factors"] = list(r.names)
    _write(args, r)


def cmd_apply(args, report: Report) -> None:
    v = _load(args.op)
    w = _load(args.inp[0])
    if not _is_operation(v):
        raise InputError("--op must hold a free operation over the ten lab/control factors")
    if not _is_process(w):
        raise InputError("--in must hold a process")
    V = v.outer() if isinstance(v, PureProcess) else v
    out = apply_operator(V, as_process(w))
    _validity_checks(report, out, args.tol)
    if args.order:
        _order_values(report, out, args.tol)
    _write(args, out.op)


def cmd_convert(args, report: Report) -> None:
    p, pp = _dist(args.from_p, "--from-p"), _dist(args.to_p, "--to-p")
    rng = np.random.default_rng(args.seed) if args.random_unitaries else None
    source = GeneralizedSwitchSpec.canonical(args.d, tuple(p)) if rng is None \
        else GeneralizedSwitchSpec.random(args.d, tuple(p), rng)
    target = GeneralizedSwitchSpec.canonical(args.d, tuple(pp)) if rng is None \
        else GeneralizedSwitchSpec.random(args.d, tuple(pp), rng)
    plan = plan_deterministic(source, target)
    w = make_generalized_switch(source)
    report.values["lambda"] = list(plan.lam)
    for i, b in enumerate(branch_checks(plan, w)):
        report.check(f"branch{i}.fidelity", 1 - b.fidelity, args.tol)
        report.check(f"branch{i}.weight", abs(b.weight - b.expected_weight), args.tol)
    f = output_fidelity(plan, w)
    report.values["fidelity"] = f
    report.check("fidelity", 1 - f, args.tol)


def _three_sigma(report: Report, name: str, mean: float, expected: float, err: float) -> None:
    z = abs(mean - expected) / err if err > 0 else (0.0 if abs(mean - expected) < 1e-12 else math.inf)
    report.check(name, z, 3.0)


def cmd_filter(args, report: Report) -> None:
    p, pp = _dist(args.p, "--p"), _dist(args.to_p, "--to-p")
    source = GeneralizedSwitchSpec.canonical(args.d, tuple(p))
    target = GeneralizedSwitchSpec.canonical(args.d, tuple(pp))
    fp = plan_filter(source, target)
    w = make_generalized_switch(source)
    born = apply_filter(fp, w)[0][0]
    report.values.update({"x": fp.x, "y": fp.y, "p_success": fp.p_success, "born": born})
    report.check("born_vs_formula", abs(born - fp.p_success), args.tol)
    report.check("completeness", fp.completeness_residual(), args.tol)
    if fp.aux is not None:
        _, branches = filtered_conversion(source, target, w)
        t = make_generalized_switch(target)
        f = min(fidelity(b, t) for b in branches if b.norm_sq() > 1e-14)
        report.values["post_filter_fidelity"] = f
        report.check("post_filter_fidelity", 1 - f, args.tol)
    if args.trials:
        hits = sample_filter(fp.p_success, args.trials, args.seed)
        mean = float(hits.mean())
        err = math.sqrt(fp.p_success * (1 - fp.p_success) / args.trials)
        report.values["mc_success_rate"] = mean
        report.values["mc_std_err"] = err
        _three_sigma(report, "mc_within_3sigma", mean, fp.p_success, err)


def cmd_distill_rate(args, report: Report) -> None:
    p = _dist(args.p, "--p")
    rate = filter_distill_rate(p)
    report.values["rate"] = rate
    if args.trials:
        mean, err = filter_distill_mc(p, args.copies, args.trials, args.seed)
        report.values.update({"mc_rate": mean, "mc_std_err": err})
        _three_sigma(report, "mc_within_3sigma", mean, rate, err)


def cmd_distill_multicopy(args, report: Report) -> None:
    p = _dist(args.p, "--p")
    N, trials = args.N, args.trials or 100
    rng = np.random.default_rng([args.seed, 2 ** 32]) if args.random_unitaries else None
    spec = GeneralizedSwitchSpec.canonical(args.d, tuple(p)) if rng is None \
        else GeneralizedSwitchSpec.random(args.d, tuple(p), rng)
    rate, rep = multicopy_distill(spec, N, trials, args.seed)
    report.values.update({
        "rate": rate, "std_err": rep.std_err, "expected_rate": rep.expected_rate,
        "filter_rate": filter_distill_rate(p), "min_fidelity": rep.min_fidelity,
        "j_histogram": {str(j): c for j, c in rep.j_histogram.items()},
    })
    report.check("min_fidelity", 1 - rep.min_fidelity, args.tol)
    _three_sigma(report, "rate_within_3sigma", rate, rep.expected_rate, rep.std_err)
    p0, p1 = p
    for j in range(N + 1):
        pj = math.comb(N, j) * p1 ** j * p0 ** (N - j)
        count = rep.j_histogram.get(j, 0)
        sd = math.sqrt(trials * pj * (1 - pj))
        _three_sigma(report, f"j_histogram.{j}", count, trials * pj, sd)


COMMANDS = {
    "build": cmd_build,
    "check": cmd_check,
    "link": cmd_link,
    "apply": cmd_apply,
    "convert": cmd_convert,
    "filter": cmd_filter,
    "distill-rate": cmd_distill_rate,
    "distill-multicopy": cmd_distill_multicopy,
}
EXPERIMENTS = ("convert", "filter", "distill-rate", "distill-multicopy")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", type=Path, default=None, help="also write the report here")
    p.add_argument("--d", type=int, default=2, help="target wire dimension")


def _add_experiment(sub, name: str) -> argparse.ArgumentParser:
    p = sub.add_parser(name)
    _common(p)
    p.add_argument("--p", type=float, nargs=2, metavar=("P0", "P1"))
    p.add_argument("--trials", type=int, default=0)
    if name == "convert":
        p.add_argument("--from-p", dest="from_p", type=float, nargs=2, metavar=("P0", "P1"))
        p.add_argument("--to-p", dest="to_p", type=float, nargs=2, metavar=("P0", "P1"))
        p.add_argument("--random-unitaries", action="store_true")
    elif name == "filter":
        p.add_argument("--to-p", dest="to_p", type=float, nargs=2, metavar=("P0", "P1"),
                       default=(0.5, 0.5))
    elif name == "distill-rate":
        p.add_argument("--copies", type=int, default=1000)
    else:
        p.add_argument("--N", type=int, required=True)
        p.add_argument("--random-unitaries", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="causalforge", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="construct a process or free operation")
    _common(b)
    b.add_argument("kind", choices=["switch", "fixed-order", "generalized", "w_ent", "pls", "loae"])
    b.add_argument("--out", type=Path)
    b.add_argument("--bit", type=int, choices=[0, 1], default=0)
    b.add_argument("--p", type=float, nargs=2, metavar=("P0", "P1"))
    b.add_argument("--basis", default="computational")
    for name in ("u_PA", "u_AB", "u_BF", "u_PB", "u_BA", "u_AF"):
        b.add_argument("--" + name.replace("_", "-").lower(), dest=name)
    b.add_argument("--require-constraints", action="store_true")
    b.add_argument("--swap-prob", type=float, default=0.5)
    b.add_argument("--ancilla-dim", type=int, default=None)

    c = sub.add_parser("check", help="validate a process or free-operation file")
    _common(c)
    c.add_argument("--in", dest="inp", action="append", required=True)
    c.add_argument("--order", action="store_true")
    c.add_argument("--entanglement", action="store_true")
    c.add_argument("--nso", action="store_true")

    lk = sub.add_parser("link", help="link product of two files")
    _common(lk)
    lk.add_argument("--in", dest="inp", action="append", required=True)
    lk.add_argument("--out", type=Path)

    a = sub.add_parser("apply", help="apply a free operation to a process")
    _common(a)
    a.add_argument("--op", required=True)
    a.add_argument("--in", dest="inp", action="append", required=True)
    a.add_argument("--out", type=Path)
    a.add_argument("--order", action="store_true")

    for name in EXPERIMENTS:
        _add_experiment(sub, name)

    run = sub.add_parser("run", help="run a named experiment")
    run_sub = run.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        _add_experiment(run_sub, name)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_PASS
    name = args.experiment if args.command == "run" else args.command
    report = Report(argv, args.seed)
    code = EXIT_PASS
    try:
        COMMANDS[name](args, report)
        code = EXIT_PASS if report.passed else EXIT_FAIL
    except DesignSearchError as exc:
        report.error = {"code": exc.code, "message": str(exc)}
        code = EXIT_INTERNAL
    except (CausalForgeError, ValueError) as exc:
        report.error = {"code": getattr(exc, "code", "BAD_INPUT"), "message": str(exc)}
        code = EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        report.error = {"code": "INTERNAL", "message": f"{type(exc).__name__}: {exc}"}
        code = EXIT_INTERNAL
    text = report.dumps()
    sys.stdout.write(text)
    if args.json is not None:
        args.json.write_text(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
