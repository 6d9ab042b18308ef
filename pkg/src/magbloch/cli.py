"""Command-line frontend: butterflies, spectra, Chern data, Peierls families.

Commands
--------
butterfly   sweep all Farey fluxes up to a denominator; CSV/JSON/SVG output
spectrum    refined spectral intervals at one flux
chern       band Chern numbers and gap labels at one flux
frame       transition winding, curvature integral and canonical residual
peierls     the H^B_{theta,q} family: matrix dump, isospectrality, Cherns
matchbands  subband Chern numbers vs Hofstadter sub-subbands at B0+Btilde
symbol      h0/h1 grid dump of the effective Peierls symbol

Exit codes: 0 success, 2 usage error, 3 numeric-validity failure.  Outputs
are deterministic for a fixed configuration.  A flat key=value file passed
with --config supplies defaults for any long option of the chosen command;
the BUTTERFLY_THREADS environment variable caps worker parallelism.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import svgplot
from .bundle import (
    ProjectorFamily,
    build_frame,
    canonical_gauge,
    mean_curvature,
    transition_function,
)
from .effective import (
    effective_symbol,
    principal_symbol,
    subprincipal_symbol,
    uniform_fields,
)
from .errors import NumericValidityError
from .hofstadter import butterfly, rational_flux, spectrum_intervals
from .peierls import (
    PeierlsParams,
    isospectrality_report,
    peierls_matrix,
    subband_chern_experiment,
    theta_chern_numbers,
)
from .topology import (
    chern_numbers,
    cluster_chern_numbers,
    colored_butterfly,
    gap_labels_diophantine,
    hofstadter_chern,
)
from .hofstadter import hofstadter_family
from .linalg import make_grid

USAGE_ERROR = 2
NUMERIC_ERROR = 3


def _f(x):
    """Floats with 12 significant digits, the serialization convention."""
    return f"{float(x):.12g}"


def _jf(x):
    return float(_f(x))


def write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def butterfly_csv(data):
    lines = ["flux_p,flux_q,flux_value,interval_index,lo,hi"]
    for flux, intervals, _ in data.rows:
        for idx in range(intervals.count):
            lo, hi = intervals.intervals[idx]
            lines.append(
                f"{flux.p},{flux.q},{_f(flux.p / flux.q)},{idx},{_f(lo)},{_f(hi)}"
            )
    return "\n".join(lines) + "\n"


def gaps_csv(data):
    lines = ["flux_p,flux_q,gap_index,label"]
    for flux, intervals, labels in data.rows:
        if not labels:
            continue
        for idx, label in enumerate(labels):
            lines.append(f"{flux.p},{flux.q},{idx},{label}")
    return "\n".join(lines) + "\n"


def butterfly_json(data):
    rows = []
    for flux, intervals, labels in data.rows:
        rows.append(
            {
                "flux_p": flux.p,
                "flux_q": flux.q,
                "flux_value": _jf(flux.p / flux.q),
                "intervals": [[_jf(lo), _jf(hi)] for lo, hi in intervals.intervals],
                "gap_labels": list(labels) if labels else None,
            }
        )
    return json.dumps({"rows": rows}, indent=1, sort_keys=True) + "\n"


def parse_butterfly_csv(text):
    """Inverse of :func:`butterfly_csv` (used by the round-trip tests)."""
    rows = {}
    lines = text.strip().split("\n")
    for line in lines[1:]:
        p, q, _, idx, lo, hi = line.split(",")
        rows.setdefault((int(p), int(q)), []).append(
            (int(idx), float(lo), float(hi))
        )
    return {
        key: [(lo, hi) for _, lo, hi in sorted(vals)] for key, vals in rows.items()
    }


def _require(args, *names):
    missing = [n for n in names if getattr(args, n.replace("-", "_")) is None]
    if missing:
        raise ValueError("missing required option(s): " + ", ".join("--" + n for n in missing))


def _cmd_butterfly(args):
    _require(args, "max-q")
    data = butterfly(args.max_q, args.grid_density, refine=not args.no_refine)
    if args.color:
        data = colored_butterfly(data)
    if args.out:
        write_text(args.out, butterfly_csv(data))
        if args.color:
            stem = args.out[:-4] if args.out.endswith(".csv") else args.out
            write_text(stem + "_gaps.csv", gaps_csv(data))
    if args.json:
        write_text(args.json, butterfly_json(data))
    if args.svg:
        write_text(args.svg, svgplot.render_svg(data, args.width, args.height))
    if not (args.out or args.json or args.svg):
        sys.stdout.write(butterfly_csv(data))
    return 0


def _cmd_spectrum(args):
    _require(args, "p", "q")
    flux = rational_flux(args.p, args.q)
    intervals = spectrum_intervals(flux, args.grid_density, refine=not args.no_refine)
    lines = [f"{_f(lo)} {_f(hi)}" for lo, hi in intervals.intervals]
    text = "\n".join(lines) + "\n"
    if args.out:
        header = "interval_index,lo,hi\n"
        rows = "".join(
            f"{i},{_f(lo)},{_f(hi)}\n"
            for i, (lo, hi) in enumerate(intervals.intervals)
        )
        write_text(args.out, header + rows)
    if args.json:
        payload = {
            "flux_p": flux.p,
            "flux_q": flux.q,
            "intervals": [[_jf(lo), _jf(hi)] for lo, hi in intervals.intervals],
        }
        write_text(args.json, json.dumps(payload, indent=1, sort_keys=True) + "\n")
    sys.stdout.write(text)
    return 0


def _cmd_chern(args):
    _require(args, "p", "q")
    flux = rational_flux(args.p, args.q)
    labels = gap_labels_diophantine(flux)
    try:
        report = hofstadter_chern(flux, args.grid)
        sys.stdout.write(" ".join(str(c) for c in report.per_band) + "\n")
        if args.verbose:
            sys.stdout.write(
                "gaps (energy-ascending): "
                + " ".join(str(t) for t in report.per_gap)
                + "\n"
            )
            # narrative order: overlying-band sums listed from the top gap down
            top_down = [str(-t) for t in reversed(report.per_gap)]
            sys.stdout.write("gaps (top-down, overlying): " + " ".join(top_down) + "\n")
    except NumericValidityError:
        # touching bands: report per-cluster joint values
        family = hofstadter_family(flux)
        grid = make_grid(family.periods[0], family.periods[1], args.grid, args.grid)
        clusters, values = cluster_chern_numbers(family, grid)
        parts = []
        for (lo, hi), c in zip(clusters, values):
            if hi - lo == 1:
                parts.append(str(c))
            else:
                parts.append(f"({lo + 1}-{hi})={c}")
        sys.stdout.write(" ".join(parts) + "\n")
        if args.verbose:
            shown = [str(t) if t is not None else "closed" for t in labels.labels]
            sys.stdout.write("gaps (energy-ascending): " + " ".join(shown) + "\n")
    return 0


def _cmd_frame(args):
    flux = rational_flux(args.p, args.q)
    family = hofstadter_family(flux)
    proj = ProjectorFamily(family, bands=(args.band,))
    frame = build_frame(proj, args.n1, args.n2)
    tf = transition_function(frame)
    omega, theta_curv = mean_curvature(frame)
    canonical = canonical_gauge(frame, tf.theta)
    tfc = transition_function(canonical)
    residual = float(
        np.max(
            np.abs(
                tfc.scalars()
                - np.exp(-2j * np.pi * tf.theta * canonical.kappa2())
            )
        )
    )
    payload = {
        "flux": str(flux),
        "band": args.band,
        "theta_winding": tf.theta,
        "theta_curvature": theta_curv,
        "omega_end_over_2pi": _jf(omega[-1] / (2 * np.pi)),
        "canonical_residual": _jf(residual),
        "transport_drift": _jf(frame.drift),
    }
    if args.json:
        write_text(args.json, json.dumps(payload, indent=1, sort_keys=True) + "\n")
    for key, val in payload.items():
        sys.stdout.write(f"{key}: {val}\n")
    return 0


def _cmd_peierls(args):
    params = PeierlsParams(args.theta, args.q, args.ptilde, args.qtilde)
    did_something = False
    if args.matrix is not None:
        k = np.array(args.matrix, dtype=float)
        h = peierls_matrix(params, k)
        for row in h:
            sys.stdout.write(
                "  ".join(f"{_f(z.real)}{z.imag:+.12g}j" for z in row) + "\n"
            )
        did_something = True
    if args.isospec:
        rep = isospectrality_report(params, args.grid_density)
        sys.stdout.write(f"isospectrality deviation: {_f(rep.deviation)}\n")
        for lo, hi in rep.peierls_intervals.intervals:
            sys.stdout.write(f"  interval {_f(lo)} {_f(hi)}\n")
        did_something = True
    if args.chern:
        clusters, values = theta_chern_numbers(params)
        parts = []
        for (lo, hi), c in zip(clusters, values):
            parts.append(str(c) if hi - lo == 1 else f"({lo + 1}-{hi})={c}")
        sys.stdout.write("subband cherns: " + " ".join(parts) + "\n")
        sys.stdout.write(f"sum: {sum(values)} (theta = {params.theta})\n")
        did_something = True
    if not did_something:
        sys.stdout.write(
            f"theta={params.theta} q={params.q} B/2pi={params.b_fraction} "
            f"dim={params.qtilde}\n"
        )
    return 0


def _cmd_matchbands(args):
    parent = None
    if args.parent_p is not None and args.parent_band is not None:
        parent = (rational_flux(args.parent_p, args.q), args.parent_band)
    res = subband_chern_experiment(
        args.theta, args.q, args.ptilde, args.qtilde, parent=parent
    )
    sys.stdout.write(f"parent flux {res.parent_flux} band {res.parent_band}\n")
    sys.stdout.write(f"composed flux {res.composed_flux}\n")
    sys.stdout.write(
        "peierls subband cherns: "
        + " ".join(str(c) for c in res.peierls_cherns)
        + "\n"
    )
    sys.stdout.write(
        "hofstadter window cherns: "
        + " ".join(str(c) for c in res.hofstadter_cherns)
        + "\n"
    )
    if res.inconclusive:
        sys.stdout.write(f"inconclusive: {res.reason}\n")
    sys.stdout.write(f"match: {res.match}\n")
    return 0 if (res.match or res.inconclusive) else NUMERIC_ERROR


def _cmd_symbol(args):
    flux = rational_flux(args.p, args.q)
    family = hofstadter_family(flux)
    proj = ProjectorFamily(family, bands=(args.band,))
    sym = effective_symbol(proj, n1=args.n1, n2=args.n2)
    phi_cos = []
    if args.phi_cos:
        for triple in args.phi_cos:
            phi_cos.append(tuple(triple))
    fields = uniform_fields(b=args.bfield, phi_const=args.phi_const, phi_cos=phi_cos)
    h0 = principal_symbol(sym, fields)
    h1 = subprincipal_symbol(sym, fields)
    l1, l2 = family.periods
    k1 = np.arange(args.k_grid) * l1 / args.k_grid
    k2 = np.arange(args.k_grid) * l2 / args.k_grid
    r1 = np.arange(args.r_grid) * 2.0 * np.pi / args.r_grid
    r2 = np.arange(args.r_grid) * 2.0 * np.pi / args.r_grid
    lines = ["k1,k2,r1,r2,h0,h1"]
    for a in k1:
        for b in k2:
            k = np.array([a, b])
            for c in r1:
                for d in r2:
                    r = np.array([c, d])
                    lines.append(
                        f"{_f(a)},{_f(b)},{_f(c)},{_f(d)},"
                        f"{_f(h0(k, r))},{_f(h1(k, r))}"
                    )
    text = "\n".join(lines) + "\n"
    if args.out:
        write_text(args.out, text)
        sys.stdout.write(f"theta={sym.theta} rows={len(lines) - 1} -> {args.out}\n")
    else:
        sys.stdout.write(text)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="magbloch",
        description="Hofstadter spectra, Chern numbers and Peierls effective models",
    )
    parser.add_argument("--config", help="flat key=value file with option defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("butterfly", help="sweep Farey fluxes")
    b.add_argument("--max-q", type=int)
    b.add_argument("--grid-density", type=int, default=201)
    b.add_argument("--no-refine", action="store_true")
    b.add_argument("--color", action="store_true")
    b.add_argument("--out", help="CSV path")
    b.add_argument("--json", help="JSON path")
    b.add_argument("--svg", help="SVG path")
    b.add_argument("--width", type=int, default=900)
    b.add_argument("--height", type=int, default=600)
    b.set_defaults(func=_cmd_butterfly)

    s = sub.add_parser("spectrum", help="intervals at one flux")
    s.add_argument("--p", type=int)
    s.add_argument("--q", type=int)
    s.add_argument("--grid-density", type=int, default=64)
    s.add_argument("--no-refine", action="store_true")
    s.add_argument("--out", help="CSV path")
    s.add_argument("--json", help="JSON path")
    s.set_defaults(func=_cmd_spectrum)

    c = sub.add_parser("chern", help="band Chern numbers at one flux")
    c.add_argument("--p", type=int)
    c.add_argument("--q", type=int)
    c.add_argument("--grid", type=int, default=40)
    c.add_argument("--verbose", action="store_true")
    c.set_defaults(func=_cmd_chern)

    f = sub.add_parser("frame", help="frame transport diagnostics for one band")
    f.add_argument("--p", type=int, required=True)
    f.add_argument("--q", type=int, required=True)
    f.add_argument("--band", type=int, required=True)
    f.add_argument("--n1", type=int, default=200)
    f.add_argument("--n2", type=int, default=64)
    f.add_argument("--json", help="JSON path")
    f.set_defaults(func=_cmd_frame)

    p = sub.add_parser("peierls", help="the H^B_{theta,q} family")
    p.add_argument("--theta", type=int, required=True)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--ptilde", type=int, required=True)
    p.add_argument("--qtilde", type=int, required=True)
    p.add_argument("--matrix", type=float, nargs=2, metavar=("K1", "K2"))
    p.add_argument("--isospec", action="store_true")
    p.add_argument("--chern", action="store_true")
    p.add_argument("--grid-density", type=int, default=96)
    p.set_defaults(func=_cmd_peierls)

    m = sub.add_parser("matchbands", help="subband Chern matching experiment")
    m.add_argument("--theta", type=int, required=True)
    m.add_argument("--q", type=int, required=True)
    m.add_argument("--ptilde", type=int, required=True)
    m.add_argument("--qtilde", type=int, required=True)
    m.add_argument("--parent-p", type=int)
    m.add_argument("--parent-band", type=int)
    m.set_defaults(func=_cmd_matchbands)

    y = sub.add_parser("symbol", help="effective symbol h0/h1 grid dump")
    y.add_argument("--p", type=int, required=True)
    y.add_argument("--q", type=int, required=True)
    y.add_argument("--band", type=int, required=True)
    y.add_argument("--bfield", type=float, default=0.0)
    y.add_argument("--phi-const", type=float, default=0.0)
    y.add_argument(
        "--phi-cos",
        type=float,
        nargs=3,
        action="append",
        metavar=("AMP", "F1", "F2"),
    )
    y.add_argument("--k-grid", type=int, default=12)
    y.add_argument("--r-grid", type=int, default=4)
    y.add_argument("--n1", type=int, default=256)
    y.add_argument("--n2", type=int, default=768)
    y.add_argument("--out", help="CSV path")
    y.set_defaults(func=_cmd_symbol)

    return parser


def _load_config(path):
    values = {}
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            values[key.strip().replace("-", "_")] = val.strip()
    return values


def _apply_config(parser, argv):
    """Install config-file values as subcommand defaults before parsing."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    try:
        path = argv[idx + 1]
    except IndexError:
        parser.error("--config requires a path")
    config = _load_config(path)
    # find the subcommand and push typed defaults into its parser
    sub_actions = [
        a for a in parser._actions if isinstance(a, argparse._SubParsersAction)
    ]
    for name, sp in sub_actions[0].choices.items():
        if name in argv:
            defaults = {}
            for action in sp._actions:
                if action.dest in config:
                    raw = config[action.dest]
                    if action.type is not None:
                        defaults[action.dest] = action.type(raw)
                    elif isinstance(action, argparse._StoreTrueAction):
                        defaults[action.dest] = raw.lower() in ("1", "true", "yes")
                    else:
                        defaults[action.dest] = raw
            sp.set_defaults(**defaults)
            break
    return argv


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    argv = _apply_config(parser, argv)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericValidityError as exc:
        sys.stderr.write(f"numeric validity failure: {exc}\n")
        return NUMERIC_ERROR
    except ValueError as exc:
        sys.stderr.write(f"invalid parameter: {exc}\n")
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
