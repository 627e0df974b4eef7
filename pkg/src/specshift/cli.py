"""``specshift`` command-line front end.

Subcommands: ``eig``, ``classify``, ``defect``, ``construct``, ``krein`` and
``report``.  Exit status is 0 on success, 2 when ``classify`` is
inconclusive and 1 on any error.  Output files are written to a temporary
name and renamed, so a failed run never leaves a partial file.
"""

from __future__ import annotations

import argparse
import contextlib
import os
import sys
from dataclasses import dataclass, field, fields

import numpy as np
import yaml

from . import classifier, counterexamples, determinant, krein, matrix_oracle
from .cdb_space import mixed_defect
from .io import (
    ParseError,
    csv_text,
    fmt,
    load_data,
    load_document,
    load_partition,
    save_data,
    write_atomic,
)
from .spectral_core import SpectralData, restrict

COMMANDS = ("eig", "classify", "defect", "construct", "krein", "report")
EXIT_OK, EXIT_ERROR, EXIT_INCONCLUSIVE = 0, 1, 2
EIG_COLUMNS = ["re", "im", "multiplicity", "residual_abs_beta", "newton_iters"]


@dataclass
class RunConfig:
    command: str
    input: list = field(default_factory=list)
    trunc: list = field(default_factory=list)
    tol: float = 1e-8
    region: tuple | None = None
    disk: tuple | None = None
    out: str | None = None
    seed: int = 0
    format: str = "csv"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if any(int(k) < 1 for k in self.trunc):
            raise ValueError("trunc must be >= 1")
        if not 0 < self.tol < 1:
            raise ValueError("tol must lie in (0, 1)")
        if self.format not in ("csv", "text"):
            raise ValueError("format must be csv or text")
        if self.region is not None and self.disk is not None:
            raise ValueError("give either --region or --disk, not both")

    @property
    def single_trunc(self) -> int | None:
        return int(self.trunc[-1]) if self.trunc else None


# --------------------------------------------------------------------------
# argument handling


def _floats(text: str, n: int, flag: str) -> tuple:
    try:
        vals = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"{flag} expects {n} comma-separated numbers") from None
    if len(vals) != n:
        raise argparse.ArgumentTypeError(f"{flag} expects {n} comma-separated numbers")
    return vals


def _ints(text: str) -> list:
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}") from None


class _Parser(argparse.ArgumentParser):
    # usage errors exit 1; status 2 is reserved for inconclusive verdicts
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--input", action="append", default=[], help="input file (repeatable)")
    common.add_argument("--trunc", type=_ints, default=None, help="truncation(s), comma separated")
    common.add_argument("--tol", type=float, default=None)
    common.add_argument("--region", type=lambda s: _floats(s, 4, "--region"), default=None,
                        help="xmin,xmax,ymin,ymax")
    common.add_argument("--disk", type=lambda s: _floats(s, 3, "--disk"), default=None, help="cx,cy,r")
    common.add_argument("--out", default=None, help="output file (default: stdout)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--format", choices=("csv", "text"), default=None)
    common.add_argument("--config", default=None, help="YAML/JSON file whose keys override flags")

    p = _Parser(prog="specshift", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("eig", parents=[common], help="eigenvalues of L from the perturbation determinant")
    e.add_argument("--oracle", action="store_true", help="also run the dense eigensolver and match")

    c = sub.add_parser("classify", parents=[common], help="completeness and synthesis verdicts")
    c.add_argument("--report", default=None, help="verdict report path")
    c.add_argument("--which", choices=("all", "completeness", "adjoint", "synthesis"), default="all")
    c.add_argument("--assert-complete", action="store_true", help="take L as complete")

    d = sub.add_parser("defect", parents=[common], help="mixed-system defect of a model")
    d.add_argument("--partition", default=None, help="partition file (index side per line)")
    d.add_argument("--side", type=int, choices=(1, 2), default=None,
                   help="put every point of Lambda on one side")

    k = sub.add_parser("construct", parents=[common], help="build a counterexample model")
    k.add_argument("--kind", required=True,
                   choices=("finite-defect", "infinite-defect", "synthesis-failure"))
    k.add_argument("--N", type=int, default=None)
    k.add_argument("--q", type=float, default=2.0)
    k.add_argument("--count", type=int, default=200)
    k.add_argument("--report", default=None, help="certificate path (default OUT.cert.txt)")

    r = sub.add_parser("krein", parents=[common], help="Krein expansion residuals and verdict")
    r.add_argument("--family", default="cos-pi-z",
                   choices=("cos-pi-z", "cos-pi-sqrt-z", "cos-pi-z-pow-k"))
    r.add_argument("--k", type=int, default=2)
    r.add_argument("--samples", type=int, default=25)
    r.add_argument("--delete", type=int, default=None, help="delete the zero with this index")
    r.add_argument("--volterra", action="store_true", help="also solve the Volterra model system")
    r.add_argument("--report", default=None, help="verdict report path")

    sub.add_parser("report", parents=[common], help="merge artifacts into one report")
    return p


_CONFIG_KEYS = {f.name for f in fields(RunConfig)} - {"command", "extra"}


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    """Defaults, then flags, then the config file (which wins)."""
    vals = {"input": list(ns.input), "trunc": ns.trunc or [], "tol": ns.tol, "region": ns.region,
            "disk": ns.disk, "out": ns.out, "seed": ns.seed, "format": ns.format}
    vals = {k: v for k, v in vals.items() if v is not None}
    base = {"input", "trunc", "tol", "region", "disk", "out", "seed", "format", "config", "command"}
    extra = {k: v for k, v in vars(ns).items() if k not in base}
    if ns.config:
        doc = load_document(ns.config)
        if not isinstance(doc, dict):
            raise ParseError("config must be a mapping", ns.config)
        for key, v in doc.items():
            key = key.replace("-", "_")
            if key in _CONFIG_KEYS:
                if key == "trunc":
                    v = _ints(v) if not isinstance(v, list) else [int(x) for x in v]
                elif key == "input":
                    v = [v] if isinstance(v, str) else list(v)
                elif key in ("region", "disk"):
                    v = tuple(float(x) for x in v)
                vals[key] = v
            elif key in extra:
                extra[key] = v
            else:
                raise ParseError(f"unknown config key {key!r}", ns.config)
    return RunConfig(command=ns.command, extra=extra, **vals)


# --------------------------------------------------------------------------
# helpers


def _emit(cfg: RunConfig, text: str, path: str | None = None) -> None:
    path = cfg.out if path is None else path
    if path:
        write_atomic(path, text)
    else:
        sys.stdout.write(text)


def _one_input(cfg: RunConfig) -> str:
    if len(cfg.input) != 1:
        raise ValueError(f"{cfg.command} needs exactly one --input")
    return cfg.input[0]


def _load(cfg: RunConfig) -> SpectralData:
    data = load_data(_one_input(cfg))
    K = cfg.single_trunc
    if K is not None and K < len(data):
        data = restrict(data, np.arange(K))
    return data


def _region(cfg: RunConfig, data: SpectralData):
    if cfg.region is not None:
        return determinant.ContourSpec.rectangle(*cfg.region)
    if cfg.disk is not None:
        cx, cy, r = cfg.disk
        return determinant.ContourSpec.circle(complex(cx, cy), r)
    return determinant.default_region(data)


# --------------------------------------------------------------------------
# commands


def cmd_eig(cfg: RunConfig) -> int:
    data = _load(cfg)
    region = _region(cfg, data)
    eigs = determinant.eigenvalues(data, region)
    rows = [[e.value.real, e.value.imag, e.multiplicity, e.residual_abs_beta, e.newton_iters]
            for e in eigs]
    header = list(EIG_COLUMNS)
    status = EXIT_OK
    summary = []
    if cfg.extra.get("oracle"):
        dense = matrix_oracle.dense_eigs(matrix_oracle.truncate(data)).eigenvalues
        dense = dense[region.contains(dense)]
        mine = np.array([e.value for e in eigs for _ in range(e.multiplicity)], dtype=complex)
        if len(mine) != len(dense):
            raise ArithmeticError(f"count mismatch: determinant {len(mine)}, dense {len(dense)}")
        m = matrix_oracle.match_spectra(mine, dense)
        header += ["oracle_re", "oracle_im", "distance"]
        pos = 0
        for row, e in zip(rows, eigs):
            j = m.pairing[pos]
            row += [dense[j].real, dense[j].imag, abs(mine[pos] - dense[j])]
            pos += e.multiplicity
        ok = m.max_distance <= cfg.tol
        summary.append(f"match: {'ok' if ok else 'FAIL'} max_distance={fmt(m.max_distance)} "
                       f"tol={fmt(cfg.tol)} count={len(mine)}")
        status = EXIT_OK if ok else EXIT_ERROR
    if cfg.format == "csv":
        _emit(cfg, csv_text(header, rows))
    else:
        lines = ["  ".join(header)] + ["  ".join(fmt(v) if isinstance(v, float) else str(v) for v in r)
                                      for r in rows]
        _emit(cfg, "\n".join(lines) + "\n")
    for s in summary:
        print(s, file=sys.stderr if not cfg.out else sys.stdout)
    return status


def cmd_classify(cfg: RunConfig) -> int:
    data = _load(cfg)
    L_complete = True if cfg.extra.get("assert_complete") else None
    which = cfg.extra.get("which", "all")
    verdicts = {}
    if which in ("all", "completeness"):
        verdicts["completeness"] = classifier.classify_completeness(data)
        if L_complete is None and verdicts["completeness"].L_defect_bound == 0:
            L_complete = True
    if which in ("all", "adjoint"):
        verdicts["adjoint"] = classifier.classify_adjoint(data, L_complete=L_complete)
    if which in ("all", "synthesis"):
        verdicts["synthesis"] = classifier.classify_synthesis(data, L_complete=L_complete)
    text = classifier.format_report(verdicts, data.name)
    _emit(cfg, text, cfg.extra.get("report") or cfg.out)
    if cfg.extra.get("report") or cfg.out:
        for key, v in verdicts.items():
            print(f"{key}: {v.conclusion}")
    headline = verdicts.get("completeness") or next(iter(verdicts.values()))
    return EXIT_INCONCLUSIVE if not headline.conclusive else EXIT_OK


def _construction_from_file(path: str) -> counterexamples.Construction:
    doc = load_document(path)
    model = doc.get("model") if isinstance(doc, dict) else None
    if not isinstance(model, dict) or "kind" not in model:
        raise ParseError("file has no 'model' recipe (write one with 'specshift construct')", path)
    return counterexamples.build(model["kind"], N=model.get("N"), q=float(model.get("q", 2.0)),
                                 count=model.get("count"))


def cmd_defect(cfg: RunConfig) -> int:
    c = _construction_from_file(_one_input(cfg))
    if cfg.extra.get("partition"):
        side = load_partition(cfg.extra["partition"], len(c.Lambda))
    else:
        side = cfg.extra.get("side")
    spec = c.spec(side)
    truncs = [min(int(k), c.count) for k in cfg.trunc] or [c.count]
    rows, dims = [], []
    for K in truncs:
        res = mixed_defect(c.space, spec, K, cfg.tol)
        dims.append(res.dimension)
        rows += [[K, "singular_value", i + 1, float(s)] for i, s in enumerate(res.singular_values)]
        rows += [[K, "tail_ratio", i + 1, float(s)] for i, s in enumerate(res.tail_ratios)]
    _emit(cfg, csv_text(["trunc", "kind", "index", "value"], rows))
    msg = _defect_phrase(dict(zip(truncs, dims)))
    print(msg, file=sys.stdout if cfg.out else sys.stderr)
    return EXIT_OK


def _defect_phrase(table: dict) -> str:
    dims = set(table.values())
    ks = ",".join(str(k) for k in table)
    if len(dims) == 1:
        return f"defect {dims.pop()}, stable over {{{ks}}}"
    return "defect unstable: " + ", ".join(f"{k}->{d}" for k, d in table.items())


def certificate_text(c: counterexamples.Construction, cert: dict) -> str:
    thm = "coun.2" if c.kind == "synthesis_failure" else "coun.1"
    out = [f"construction: {c.kind}", f"theorem: {thm}", f"q: {fmt(c.q)}", f"count: {c.count}"]
    if c.N is not None:
        out.append(f"N: {c.N}")
    if c.kind == "finite_defect":
        for j, r in cert["monomial_residuals"].items():
            out.append(f"monomial z^{j}: s_space_residual={fmt(r)} tol=1e-07")
        g = cert["degree_N_gate"]
        out.append(f"degree N monomial gate: converges={g.converges} grows={g.grows} "
                   f"growth_ratio={fmt(g.growth_ratio)}")
        out.append("biorthogonal side: " + _defect_phrase(cert["biorthogonal_defect"]))
        out.append("kernel side: " + _defect_phrase(cert["kernel_defect"]))
    elif c.kind == "infinite_defect":
        for j, r in enumerate(cert["residuals"], start=1):
            out.append(f"S/P_{j}: s_space_residual={fmt(r)}")
        out.append(f"gram independent: {cert['independent']} "
                   f"smallest_singular_value={fmt(cert['gram_singular_values'][-1])}")
        out.append("kernel side: " + _defect_phrase(cert["kernel_defect"]))
    else:
        out.append("mixed system: " + _defect_phrase(cert["mixed_defect"]))
        out.append("all kernels: " + _defect_phrase(cert["all_kernels_defect"]))
        out.append("all biorthogonal: " + _defect_phrase(cert["all_biorthogonal_defect"]))
    if "dimension" in cert:
        out.append(f"dimension: {cert['dimension']}")
        out.append(f"stable: {cert['stable']}")
    return "\n".join(out) + "\n"


def cmd_construct(cfg: RunConfig) -> int:
    ex = cfg.extra
    c = counterexamples.build(ex["kind"], N=ex.get("N"), q=ex.get("q", 2.0), count=ex.get("count"))
    truncs = tuple(cfg.trunc) or counterexamples.DEFAULT_TRUNCS
    cert = counterexamples.certify(c, truncs)
    text = certificate_text(c, cert)
    pv = counterexamples.perturbation_vectors(c)
    if cfg.out:
        if pv is None:
            raise ArithmeticError("perturbation vectors overflow double precision at this count")
        t, nu, a, b = pv
        data = SpectralData(t=t, nu=nu, a=a, b=b, name=f"{c.kind}")
        save_data(cfg.out, data, model=c.recipe())
        write_atomic(ex.get("report") or cfg.out + ".cert.txt", text)
        sys.stdout.write(text)
    else:
        _emit(cfg, text, ex.get("report"))
    return EXIT_OK


def cmd_krein(cfg: RunConfig) -> int:
    ex = cfg.extra
    trunc = cfg.single_trunc or 10_000
    cand = krein.family(ex.get("family", "cos-pi-z"), trunc=trunc, k=ex.get("k", 2),
                        delete=ex.get("delete"))
    z = krein.default_samples(cand, ex.get("samples", 25), seed=cfg.seed)
    res = krein.krein_residual(cand, z)
    verdict = krein.removability_verdict(cand, z, residual=res)
    rows = [[v.real, v.imag, float(e)] for v, e in zip(z, res.per_sample)]
    _emit(cfg, csv_text(["re", "im", "residual"], rows))
    lines = [
        f"family: {cand.family}",
        f"trunc: {res.trunc}",
        f"samples: {len(z)}",
        f"seed: {cfg.seed}",
        f"residual: {fmt(res.residual)}",
        f"tail_bound: {fmt(res.tail_bound)}",
        f"side_series: {fmt(verdict.side.partial_sum)} tail={fmt(verdict.side.tail)} "
        f"diverges={verdict.side.diverges}",
        f"verdict: {verdict.conclusion}",
        f"reason: {verdict.reason}",
    ]
    if ex.get("volterra"):
        vc = krein.volterra_model_check(cand, samples=z)
        lines.append(f"volterra_residual: {fmt(vc.residual)} reconstruction={fmt(vc.reconstruction)} "
                     f"coefficient_step={fmt(vc.coefficient_step)}")
    text = "\n".join(lines) + "\n"
    if ex.get("report"):
        write_atomic(ex["report"], text)
    (sys.stdout if cfg.out else sys.stderr).write(text)
    return EXIT_OK


def cmd_report(cfg: RunConfig) -> int:
    if not cfg.input:
        raise ValueError("report needs at least one --input artifact")
    parts, theorems = ["specshift report", ""], []
    for path in cfg.input:
        try:
            with open(path, encoding="utf-8") as fh:
                body = fh.read()
        except OSError as e:
            raise ValueError(f"missing artifact {path}: {e.strerror}") from None
        parts.append(f"== {os.path.basename(path)} ==")
        parts.append(body.rstrip("\n"))
        parts.append("")
        for line in body.splitlines():
            if line.startswith("theorem: ") and line[9:] not in theorems:
                theorems.append(line[9:])
    parts.append("theorems used: " + (", ".join(theorems) if theorems else "none"))
    _emit(cfg, "\n".join(parts) + "\n")
    return EXIT_OK


HANDLERS = {
    "eig": cmd_eig,
    "classify": cmd_classify,
    "defect": cmd_defect,
    "construct": cmd_construct,
    "krein": cmd_krein,
    "report": cmd_report,
}


def run(cfg: RunConfig) -> int:
    return HANDLERS[cfg.command](cfg)


def _thread_limit():
    n = os.environ.get("SPECSHIFT_THREADS")
    if not n:
        return contextlib.nullcontext()
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # optional; BLAS then keeps its own default
        print("specshift: SPECSHIFT_THREADS ignored (threadpoolctl not installed)", file=sys.stderr)
        return contextlib.nullcontext()
    return threadpool_limits(limits=max(1, int(n)))


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = config_from_args(ns)
        with _thread_limit():
            return run(cfg)
    except (ParseError, ValueError, ArithmeticError, OSError, KeyError, yaml.YAMLError) as e:
        print(f"specshift {ns.command}: error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as e:  # numerical failure inside a module
        print(f"specshift {ns.command}: error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
