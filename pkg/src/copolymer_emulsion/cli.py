"""Command-line front end.

Every subcommand produces one or more tables.  Tables go to stdout as CSV
(or JSON with ``--format json``); with ``--out PREFIX`` they are written
to ``PREFIX[_kind].csv`` next to ``PREFIX.meta.json``.  Settings come
from built-in defaults, then a JSON ``--config`` file, then flags.

Exit codes: 0 success, 1 error or failed validation, 2 results contain
undecided phase labels.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import warnings
from dataclasses import asdict, dataclass, fields

import numpy as np

EXIT_OK, EXIT_ERROR, EXIT_UNCERTAIN = 0, 1, 2

TOLERANCE_VERSION = 1


@dataclass
class RunConfig:
    p: float = 0.3
    alpha: float = 1.0
    beta: float = 0.0
    r: float = 1.0
    grid: tuple = ()
    beta_grid: tuple = ()
    seed: int = 0
    samples: int = 32
    L_ladder: tuple = (16, 32, 64)
    mu_max: float = 16.0
    M: int = 512
    T: int = 2048
    fields: int = 8
    band: float = 2.0
    beta_max: float = 16.0
    beta_tol: float = 1e-2
    deltas: tuple = (0.02, 0.04, 0.06, 0.08, 0.1)
    ladder: tuple = ((512, 8), (2048, 16), (8192, 32))
    seeds: int = 6
    tolerance: float = 0.1
    cache: str | None = None
    out: str | None = None
    format: str = "csv"

    def validate(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        for name in ("band", "beta_tol", "tolerance", "beta_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.format not in ("csv", "json"):
            raise ValueError("format must be csv or json")
        if self.seeds < 1:
            raise ValueError("need at least one seed")

    def estimator(self):
        from .interface import EstimatorConfig
        return EstimatorConfig(tuple(self.L_ladder), self.samples, self.mu_max, self.seed)

    def frequency(self):
        from .frequencies import FrequencyConfig
        return FrequencyConfig(self.M, self.T, self.fields, self.seed)

    def phase(self):
        from .phases import PhaseConfig
        return PhaseConfig(self.frequency(), self.estimator(), self.band, self.beta_max, self.beta_tol)

    def public(self):
        """Settings that determine results (not where they are written)."""
        d = asdict(self)
        for key in ("out", "format", "cache"):
            d.pop(key)
        return d

    def digest(self, command):
        blob = json.dumps({"command": command, **self.public()}, sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_FIELD_NAMES = {f.name for f in fields(RunConfig)}


# ---------------------------------------------------------------------------
# parsing helpers


def parse_list(text):
    """'1,2,3' or 'start:stop:num' (inclusive, evenly spaced)."""
    text = str(text).strip()
    if text.count(":") == 2 and "," not in text:
        lo, hi, num = text.split(":")
        return tuple(float(v) for v in np.linspace(float(lo), float(hi), int(num)))
    vals = tuple(float(v) for v in text.split(",") if v.strip())
    if not vals:
        raise ValueError(f"empty list {text!r}")
    return vals


def parse_pairs(text, kind=float):
    """'1:3,2:4' -> ((1, 3), (2, 4))."""
    out = []
    for item in str(text).split(","):
        parts = item.strip().split(":")
        if len(parts) != 2:
            raise ValueError(f"expected 'x:y' pairs, got {item!r}")
        out.append((kind(parts[0]), kind(parts[1])))
    return tuple(out)


def _ints(text):
    return tuple(int(v) for v in str(text).split(",") if v.strip())


def fmt(v):
    """Stable text form of a table cell."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


@dataclass
class Table:
    kind: str
    columns: tuple
    rows: list

    def csv_text(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([fmt(v) for v in row])
        return buf.getvalue()

    def json_obj(self):
        return {"kind": self.kind, "columns": list(self.columns),
                "rows": [[_jsonable(v) for v in row] for row in self.rows]}


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else fmt(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _version():
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:  # not installed as a distribution
        return "0.1.0"


def emit(command, cfg: RunConfig, tables, info=None, stdout=None):
    stdout = stdout or sys.stdout
    meta = {
        "command": command,
        "config": cfg.public(),
        "config_hash": cfg.digest(command),
        "seed": cfg.seed,
        "tolerance_version": TOLERANCE_VERSION,
        "version": _version(),
        "tables": [t.kind for t in tables],
    }
    if info:
        meta["info"] = info
    meta = json.loads(json.dumps(meta, default=_json_default))
    if cfg.out:
        base = cfg.out
        folder = os.path.dirname(base)
        if folder:
            os.makedirs(folder, exist_ok=True)
        for t in tables:
            name = base if len(tables) == 1 else f"{base}_{t.kind}"
            if cfg.format == "csv":
                with open(name + ".csv", "w", newline="") as fh:
                    fh.write(t.csv_text())
            else:
                with open(name + ".json", "w") as fh:
                    json.dump(t.json_obj(), fh, indent=1, sort_keys=True)
                    fh.write("\n")
        with open(base + ".meta.json", "w") as fh:
            json.dump(meta, fh, indent=1, sort_keys=True)
            fh.write("\n")
        return
    if cfg.format == "json":
        json.dump({"meta": meta, "tables": [t.json_obj() for t in tables]}, stdout,
                  indent=1, sort_keys=True)
        stdout.write("\n")
    else:
        for k, t in enumerate(tables):
            if len(tables) > 1:
                stdout.write(("\n" if k else "") + f"# {t.kind}\n")
            stdout.write(t.csv_text())


def _json_default(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    return str(o)


# ---------------------------------------------------------------------------
# commands


def cmd_entropy(cfg, args):
    from .entropy import entropy_G, hat_kappa, kappa_block, kappa_diag
    rows = []
    for a in args.kappa_diag or ():
        rows.append(("kappa_diag", a, None, kappa_diag(a)))
    for a, b in args.kappa or ():
        rows.append(("kappa", a, b, kappa_block(a, b)))
    for mu in args.hat_kappa or ():
        rows.append(("hat_kappa", mu, None, hat_kappa(mu)))
    for mu, a in args.G or ():
        rows.append(("G", mu, a, entropy_G(mu, a)))
    if not rows:
        raise ValueError("nothing to evaluate; pass --kappa-diag, --kappa, --hat-kappa or --G")
    return [Table("entropy", ("quantity", "arg1", "arg2", "value"), rows)], None, EXIT_OK


def _point(cfg):
    from .interface import InteractionPoint
    return InteractionPoint(cfg.alpha, cfg.beta)


def cmd_phi(cfg, args):
    from .entropy import hat_kappa
    from .interface import in_annealed_region, phi_I_table
    point = _point(cfg)
    mus = cfg.grid or (1.0, 1.5, 2.0, 3.0, 4.0)
    est = cfg.estimator()
    if max(mus) > est.mu_max:
        raise ValueError(f"slopes must not exceed mu_max = {est.mu_max}")
    table = phi_I_table(point, est)
    rows = [(mu, table.value(mu), table.stderr(mu), hat_kappa(mu)) for mu in mus]
    info = {"annealed_region": in_annealed_region(point), "L_ladder": list(est.L_ladder)}
    return [Table("phi", ("mu", "phi", "stderr", "hat_kappa"), rows)], info, EXIT_OK


def cmd_blocks(cfg, args):
    from .blocks import psi_AA, psi_BA_hat, psi_BB, psi_cross
    from .interface import interface_profile
    point = _point(cfg)
    phi = interface_profile(point, cfg.estimator())
    rows = []
    for a in cfg.grid or (2.5, 3.0, 4.0):
        ab = psi_cross("AB", point, a, phi)
        ba = psi_cross("BA", point, a, phi)
        hat = psi_BA_hat(point.r, a)
        rows.append((a, psi_AA(a).value, psi_BB(point.r, a).value, hat.value,
                     ab.value, ab.stderr, ba.value, ba.stderr, ba.maximizer.b, ba.maximizer.c))
    cols = ("a", "psi_AA", "psi_BB", "psi_BA_hat", "psi_AB", "psi_AB_stderr",
            "psi_BA", "psi_BA_stderr", "BA_b", "BA_c")
    return [Table("blocks", cols, rows)], None, EXIT_OK


def cmd_freq(cfg, args):
    from .frequencies import rho_star_estimate
    tri = rho_star_estimate(cfg.p, cfg.frequency())
    rows = [("rho_star", tri.rho_star, tri.stderr[0]),
            ("rho_BA", tri.rho_BA, tri.stderr[1]),
            ("rho_BB", tri.rho_BB, tri.stderr[2])]
    return [Table("freq", ("quantity", "value", "stderr"), rows)], None, EXIT_OK


def cmd_solve(cfg, args):
    from .frequencies import rho_star_estimate
    from .solver import FullConfig, solve_f_D1, solve_f_D2, solve_f_full, solve_f_L1
    from .interface import interface_profile
    point = _point(cfg)
    tri = rho_star_estimate(cfg.p, cfg.frequency())
    phi = interface_profile(point, cfg.estimator())
    sols = [solve_f_D1(point.r, tri), solve_f_D2(point.r, tri),
            solve_f_L1(point, tri, phi), solve_f_full(point, cfg.p, FullConfig(cfg.frequency(), cfg.estimator()), phi)]
    rows = [(s.label, s.value, s.stderr, s.x, s.y, s.z,
             s.excursion.b if s.excursion else None, s.excursion.c if s.excursion else None,
             s.multiplicity) for s in sols]
    cols = ("formula", "value", "stderr", "x", "y", "z", "b", "c", "multiple_maximizers")
    return [Table("solve", cols, rows)], {"rho": [tri.rho_star, tri.rho_BA, tri.rho_BB]}, EXIT_OK


def cmd_phase(cfg, args):
    from .phases import trace_phase_diagram
    r_grid = cfg.grid or (0.25, 0.5, 1.0)
    diag = trace_phase_diagram(cfg.p, r_grid, cfg.beta_grid, cfg.phase())
    c1 = {pt.r: pt for pt in diag.curves["beta_c1"].samples}
    c2 = {pt.r: pt for pt in diag.curves["beta_c2"].samples}
    rows = []
    for lb in diag.curves["lower_bound"].samples:
        a, b = c1.get(lb.r), c2.get(lb.r)
        rows.append((lb.r, lb.beta,
                     a.beta if a else None, a.uncertainty if a else None,
                     b.beta if b else None, b.uncertainty if b else None,
                     (a or b).censored))
    curves = Table("curves", ("r", "lower_bound", "beta_c1", "beta_c1_uncertainty",
                              "beta_c2", "beta_c2_uncertainty", "censored"), rows)
    grid_rows = []
    for cell in diag.grid:
        m = cell.label.margins
        grid_rows.append((cell.r, cell.beta, cell.r + cell.beta, cell.label.label,
                          "|".join(cell.label.candidates),
                          *(m[k].value if k in m else None
                            for k in ("D1", "D2_AB", "D2_localization", "L1"))))
    grid = Table("grid", ("r", "beta", "alpha", "label", "candidates", "margin_D1",
                          "margin_D2_AB", "margin_D2_localization", "margin_L1"), grid_rows)
    a = diag.alpha_star
    info = {"alpha_star": a.value, "alpha_star_residual": a.residual,
            "tricritical_beta": c1[max(c1)].beta if c1 else None,
            "l1_l2_boundary": "conjectural, not traced"}
    code = EXIT_UNCERTAIN if (diag.has_uncertain and not args.allow_uncertain) else EXIT_OK
    return [curves, grid], info, code


def cmd_probe_order(cfg, args):
    from .phases import transition_gap_probe
    probe = transition_gap_probe(args.kind, cfg.r, cfg.p, cfg.deltas, cfg.phase())
    rows = [(row.delta, row.gap, row.per_delta, row.per_delta2, row.stderr, row.noisy)
            for row in probe.rows]
    info = {"kind": probe.kind, "origin": probe.origin, "effective_order": probe.effective_order(),
            **probe.extra}
    return [Table("probe", ("delta", "gap", "gap_over_delta", "gap_over_delta2",
                            "stderr", "noise_dominated"), rows)], info, EXIT_OK


def cmd_validate(cfg, args):
    from .finite_model import convergence_study
    from .solver import FullConfig, solve_f_full
    point = _point(cfg)
    ladder = tuple((int(n), int(L)) for n, L in cfg.ladder)
    rows_ = convergence_study(point, cfg.p, ladder, range(cfg.seed, cfg.seed + cfg.seeds))
    target = solve_f_full(point, cfg.p, FullConfig(cfg.frequency(), cfg.estimator()))
    rows = [(r.n, r.L, r.mean, r.spread, r.mean - target.value) for r in rows_]
    failures = []
    gap = abs(rows_[-1].mean - target.value)
    if gap > cfg.tolerance:
        failures.append(f"largest rung differs from f_full by {gap:.4g} > {cfg.tolerance}")
    spreads = [r.spread for r in rows_]
    zero = point.alpha == 0 and point.beta == 0
    if zero:
        if any(s != 0.0 for s in spreads):
            failures.append("zero coupling values depend on the seed")
    elif len(rows_) > 1 and cfg.seeds > 1 and any(b >= a for a, b in zip(spreads, spreads[1:])):
        failures.append("seed spread does not shrink along the ladder")
    info = {"f_full": target.value, "f_full_stderr": target.stderr,
            "passed": not failures, "failures": failures}
    for msg in failures:
        print(f"validate: {msg}", file=sys.stderr)
    return ([Table("validate", ("n", "L", "mean", "spread", "mean_minus_f_full"), rows)],
            info, EXIT_ERROR if failures else EXIT_OK)


COMMANDS = {
    "entropy": cmd_entropy,
    "phi": cmd_phi,
    "blocks": cmd_blocks,
    "freq": cmd_freq,
    "solve": cmd_solve,
    "phase": cmd_phase,
    "probe-order": cmd_probe_order,
    "validate": cmd_validate,
}


# ---------------------------------------------------------------------------
# argument handling


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _common(parser):
    g = parser.add_argument_group("shared settings (override --config)")
    g.add_argument("--config", help="JSON file with settings")
    g.add_argument("--p", type=float)
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--r", type=float)
    g.add_argument("--grid", type=parse_list, help="sweep values: 'x,y,z' or 'start:stop:num'")
    g.add_argument("--beta-grid", type=parse_list, dest="beta_grid")
    g.add_argument("--seed", type=int)
    g.add_argument("--samples", type=int)
    g.add_argument("--L-ladder", type=_ints, dest="L_ladder")
    g.add_argument("--mu-max", type=float, dest="mu_max")
    g.add_argument("--M", type=int)
    g.add_argument("--T", type=int)
    g.add_argument("--fields", type=int)
    g.add_argument("--band", type=float)
    g.add_argument("--beta-max", type=float, dest="beta_max")
    g.add_argument("--beta-tol", type=float, dest="beta_tol")
    g.add_argument("--out", help="output prefix; tables and metadata are written to files")
    g.add_argument("--format", choices=("csv", "json"))
    g.add_argument("--cache", help="phi cache file (default: $PHI_CACHE_PATH, else memory)")


def build_parser():
    parser = _Parser(prog="emulsion", description="Copolymer-in-emulsion phase diagram tools.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("entropy", help="path entropies kappa, hat_kappa and G")
    _common(p)
    p.add_argument("--kappa-diag", type=parse_list, dest="kappa_diag")
    p.add_argument("--kappa", type=parse_pairs, help="a:b pairs")
    p.add_argument("--hat-kappa", type=parse_list, dest="hat_kappa")
    p.add_argument("--G", type=parse_pairs, help="mu:a pairs")

    for name, helptext in (("phi", "single-interface free energy over a slope grid"),
                           ("blocks", "block-pair free energies over an aspect-ratio grid"),
                           ("freq", "coarse-path frequency triple"),
                           ("solve", "the four free-energy formulas at one point")):
        _common(sub.add_parser(name, help=helptext))

    p = sub.add_parser("phase", help="alpha_star, critical curves and a labelled grid")
    _common(p)
    p.add_argument("--allow-uncertain", action="store_true",
                   help="exit 0 even when some grid labels are undecided")

    p = sub.add_parser("probe-order", help="free-energy gaps beyond a transition")
    _common(p)
    p.add_argument("--kind", choices=("D1D2", "D1L1", "D2L1"), required=True)
    p.add_argument("--deltas", type=parse_list)

    p = sub.add_parser("validate", help="finite-model convergence against f_full")
    _common(p)
    p.add_argument("--ladder", type=lambda s: parse_pairs(s, int), help="n:L pairs")
    p.add_argument("--seeds", type=int)
    p.add_argument("--tolerance", type=float)
    return parser


def resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ValueError("config file must hold a JSON object")
        unknown = set(data) - _FIELD_NAMES
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key, val in data.items():
            if isinstance(val, list):
                val = tuple(tuple(v) if isinstance(v, list) else v for v in val)
            setattr(cfg, key, val)
    for key in _FIELD_NAMES:
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    cfg.validate()
    return cfg


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    from .blocks import OptimizerError
    from .entropy import ResourceError
    from .interface import CacheError
    from .phases import BracketError
    from .solver import ConvergenceError
    try:
        cfg = resolve_config(args)
        if cfg.cache:
            os.environ["PHI_CACHE_PATH"] = cfg.cache
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            # estimator noise warnings still reach stderr
            warnings.filterwarnings("default", message="phi\\^I stderr", category=RuntimeWarning)
            tables, info, code = COMMANDS[args.command](cfg, args)
        emit(args.command, cfg, tables, info)
    except (CacheError, ResourceError, ConvergenceError, OptimizerError, BracketError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return code


if __name__ == "__main__":
    sys.exit(main())
