"""Command-line front end.

Subcommands: coherence, certify, fit, simulate, scaling, smooth.  Configs
are JSON or TOML.  Exit codes: 0 success, 1 infeasible certificate, 2 I/O
or validation errors (including unknown subcommands).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io as sio
from .certificates import InfeasibleCertificateError, NoiseSpec
from .corrupted import CorruptionSpec, composed_tail, smooth_link
from .design import DesignMatrix, DomainSpec, coherence_stats
from .estimators import EstimationProblem, FitOptions, fit
from .harness import (
    ExperimentConfig,
    build_certificate,
    load_config,
    load_config_dict,
    run_coverage,
    run_scaling,
    generate_design,
)
from .links import AnalyticLink, ExpFamilyLink, link_from_spec


def _write_out(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _add_common(sp):
    sp.add_argument("--seed", type=int, default=None, help="override the config seed")
    sp.add_argument("--out", default=None, help="write the primary output to this path")
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    sp.add_argument("--threads", type=int, default=None, help="worker threads for replicates")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="sparselink",
        description="Sparse nonlinear regression with certified l1 tuning constants.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("coherence", help="coherence statistics of a design matrix")
    sp.add_argument("matrix", help="CSV or SPCT matrix file")
    _add_common(sp)

    sp = sub.add_parser("certify", help="compute a bound certificate from a config")
    sp.add_argument("config", help="experiment config (JSON or TOML)")
    _add_common(sp)

    sp = sub.add_parser("fit", help="solve one estimation problem from a problem spec")
    sp.add_argument("problem", help="problem spec JSON")
    _add_common(sp)

    sp = sub.add_parser("simulate", help="coverage experiment from a config")
    sp.add_argument("config")
    _add_common(sp)

    sp = sub.add_parser("scaling", help="error-vs-n scaling experiment from a config")
    sp.add_argument("config")
    _add_common(sp)

    sp = sub.add_parser("smooth", help="smoothed-link diagnostics for a corrupted model")
    sp.add_argument("config", help='JSON with "link" and "corruption" (and optional "noise")')
    _add_common(sp)
    return ap


def _cmd_coherence(args):
    X = DesignMatrix(sio.load_matrix(args.matrix))
    _write_out(sio.dumps_json(coherence_stats(X).as_dict()), args.out)
    return 0


def _apply_overrides(config, args):
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.threads is not None:
        config = replace(config, threads=args.threads)
    return config


def _cmd_certify(args):
    config = _apply_overrides(load_config(args.config), args)
    link = config.link()
    X = _design_of(config)
    cert = build_certificate(
        X, link, config.noise, config.domain, config.beta.s,
        config.certificate, config.problem_kind(),
    )
    _write_out(sio.dumps_json(cert.as_dict()), args.out)
    if not cert.feasible:
        print(f"infeasible certificate: {cert.infeasibility_reason()}", file=sys.stderr)
        return 1
    return 0


def _design_of(config):
    from .harness import _rng

    d = config.design
    return generate_design(
        d.kind, d.n, d.p, _rng(config.seed, 0), normalize=d.normalize, path=d.path
    )


def _cmd_fit(args):
    spec = load_config_dict(args.problem)
    X = DesignMatrix(sio.load_matrix(spec["matrix"]))
    y = sio.load_vector(spec["y"])
    link = link_from_spec(spec["link"])
    dom = spec.get("domain", {})
    domain = DomainSpec(
        interval=tuple(dom.get("interval", (-np.inf, np.inf))),
        weighted_l1_cap=dom.get("weighted_l1_cap"),
        support_cap=dom.get("support_cap"),
    )
    if "c_r" in spec:
        c_r = float(spec["c_r"])
    elif "certificate" in spec:
        cert = load_config_dict(spec["certificate"])
        if cert.get("c_r") is None:
            raise ValueError("referenced certificate carries no c_r (infeasible?)")
        c_r = float(cert["c_r"])
    else:
        raise ValueError('problem spec needs "c_r" or a "certificate" reference')
    kind = spec.get("kind") or ("mle" if isinstance(link, ExpFamilyLink) else "lse")
    prob = EstimationProblem(X=X, y=y, link=link, domain=domain, c_r=c_r, kind=kind)
    opts = FitOptions(
        tol=spec.get("tol"),
        max_iter=int(spec.get("max_iter", 50_000)),
        multi_start=int(spec.get("multi_start", 5)),
        seed=int(args.seed or spec.get("seed", 0)),
    )
    res = fit(prob, opts)
    _write_out(sio.dumps_json(res.as_dict()), args.out)
    return 0


def _cmd_simulate(args):
    config = _apply_overrides(load_config(args.config), args)
    report = run_coverage(config)
    if args.format == "csv":
        import io as _io

    # primary payload
    if args.format == "csv":
        import csv as _csv
        import io as _io

        buf = _io.StringIO()
        w = _csv.writer(buf, lineterminator="\n")
        from .harness import ReplicateRecord

        w.writerow(ReplicateRecord.ROW_FIELDS)
        for r in report.records:
            w.writerow([sio._csv_cell(c) for c in r.row()])
        _write_out(buf.getvalue(), args.out)
    else:
        _write_out(sio.dumps_json(report.as_dict()), args.out)
    outs = config.outputs
    if outs.get("report"):
        report.write_json(outs["report"])
    if outs.get("records"):
        report.write_csv(outs["records"])
    return 0


def _cmd_scaling(args):
    config = _apply_overrides(load_config(args.config), args)
    report = run_scaling(config)
    _write_out(sio.dumps_json(report.as_dict()), args.out)
    if config.outputs.get("report"):
        report.write_json(config.outputs["report"])
    return 0


def _cmd_smooth(args):
    spec = load_config_dict(args.config)
    link = link_from_spec(spec["link"])
    if not isinstance(link, AnalyticLink):
        raise ValueError("smooth needs an analytic link")
    cspec = CorruptionSpec.from_dict(spec["corruption"])
    sl = smooth_link(link, cspec)
    zs = np.linspace(-cspec.R, cspec.R, 9)
    out = {
        "link": link.spec_dict(),
        "corruption": cspec.as_dict(),
        "method": sl.method,
        "sup_f": sl.sup_f,
        "slope_bound": sl.slope_bound,
        "series": [float(c) for c in sl.series] if sl.series is not None else None,
        "series_quadrature_deviation": sl.series_quad_dev,
        "grid": [float(z) for z in zs],
        "g_on_grid": [float(v) for v in sl.g(zs)],
    }
    if spec.get("noise"):
        folded = composed_tail(NoiseSpec.from_dict(spec["noise"]), cspec, sup_f=sl.sup_f)
        out["composed_noise"] = folded.as_dict()
    _write_out(sio.dumps_json(out), args.out)
    return 0


_COMMANDS = {
    "coherence": _cmd_coherence,
    "certify": _cmd_certify,
    "fit": _cmd_fit,
    "simulate": _cmd_simulate,
    "scaling": _cmd_scaling,
    "smooth": _cmd_smooth,
}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return _COMMANDS[args.command](args)
    except InfeasibleCertificateError as exc:
        sys.stdout.write(sio.dumps_json(exc.certificate.as_dict()))
        print(f"infeasible certificate: {exc.certificate.infeasibility_reason()}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, OSError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
