"""Command-line front end: ``zetachaos {field,kernel,chaos,coupling,critical,all}``.

Settings come from built-in defaults, then an optional INI-style config
file (``--config``, section ``[zetachaos]``, flat keys), then command-line
flags.  Every run writes ``manifest.json`` and ``manifest.ini`` to the
output directory; the INI manifest can be fed back through ``--config``.

Exit codes: 0 success, 2 invalid configuration, 3 numeric guard tripped,
4 file-system error.
"""

import argparse
import configparser
import dataclasses
import logging
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import chaos, coupling, critical, kernel
from . import field as fe
from .output import manifest_hash, write_json, write_table
from .primes import ConvergenceError, ResourceLimitError, build_prime_table

log = logging.getLogger("zetachaos")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
SUBCOMMANDS = ("field", "kernel", "chaos", "coupling", "critical", "all")
SECTION = "zetachaos"


class ConfigError(ValueError):
    pass


def _floats(s):
    return [float(v) for v in str(s).replace(",", " ").split()]


def _ints(s):
    return [int(float(v)) for v in str(s).replace(",", " ").split()]


@dataclass
class RunConfig:
    subcommand: str = "all"
    n_primes: int = 10_000
    beta: float = 1.0
    alpha: float = 1.0 / 3.0
    grid_size: int = 257
    level: int = 4
    r_list: list = field(default_factory=lambda: [0.25, 0.125, 0.0625, 0.03125])
    q_list: list = field(default_factory=lambda: [1.0, 2.0])
    n_samples: int = 1000
    seed: int = 0
    workers: int = 1
    out: str = "zetachaos-out"
    format: str = "csv"
    block_sizes: list = field(default_factory=lambda: [16, 64, 256, 1024])
    n_list: list = field(default_factory=lambda: [1000, 10_000])
    kernel_lags: list = field(default_factory=lambda: [0.1, 0.5, 1.0, 2.0])

    def validate(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {self.subcommand!r}")
        if self.n_primes < 0:
            raise ConfigError("n_primes must be >= 0")
        if not self.beta > 0:
            raise ConfigError("beta must be > 0")
        if not 0 < self.alpha < 0.4:
            raise ConfigError("alpha must lie in (0, 2/5)")
        if self.grid_size < 2 or self.level < 0:
            raise ConfigError("grid_size must be >= 2 and level >= 0")
        cells = self.grid_size - 1
        if cells % 2 ** (self.level + 4):
            raise ConfigError(
                f"grid_size - 1 = {cells} must be a multiple of 2^(level+4) = {2 ** (self.level + 4)}")
        if self.n_samples < 1 or self.workers < 1:
            raise ConfigError("samples and workers must be >= 1")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if any(not 0 < r <= 0.25 for r in self.r_list):
            raise ConfigError("r values must lie in (0, 1/4]")
        if any(n < 2 for n in self.n_list):
            raise ConfigError("n_list entries must be >= 2")
        return self

    def manifest(self):
        d = dataclasses.asdict(self)
        d.pop("workers")  # outputs do not depend on it
        d.pop("out")
        return d


_KEYS = {
    "n_primes": int, "beta": float, "alpha": float, "grid_size": int, "level": int,
    "r_list": _floats, "q_list": _floats, "n_samples": int, "seed": int, "workers": int,
    "out": str, "format": str, "block_sizes": _ints, "n_list": _ints, "kernel_lags": _floats,
}


def load_config(path):
    """Flat ``key = value`` settings from section ``[zetachaos]``."""
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise OSError(f"cannot read config file {path}")
    if SECTION not in cp:
        raise ConfigError(f"{path}: missing [{SECTION}] section")
    out = {}
    for key, raw in cp[SECTION].items():
        if key not in _KEYS:
            raise ConfigError(f"{path}: unknown key {key!r}")
        try:
            out[key] = _KEYS[key](raw)
        except ValueError as exc:
            raise ConfigError(f"{path}: bad value for {key}: {raw!r}") from exc
    return out


def dump_config(cfg, path, digest):
    cp = configparser.ConfigParser()
    vals = {}
    for k in _KEYS:
        if k in ("workers", "out"):  # not part of the reproducible manifest
            continue
        v = getattr(cfg, k)
        vals[k] = " ".join(repr(x) for x in v) if isinstance(v, list) else str(v)
    cp[SECTION] = vals
    cp["manifest"] = {"sha256": digest, "subcommand": cfg.subcommand}
    with open(path, "w") as fh:
        cp.write(fh)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with a [zetachaos] section")
    common.add_argument("--n-primes", type=int, dest="n_primes")
    common.add_argument("--beta", type=float)
    common.add_argument("--alpha", type=float)
    common.add_argument("--grid", type=int, dest="grid_size")
    common.add_argument("--level", type=int)
    common.add_argument("--samples", type=int, dest="n_samples")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--out")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="zetachaos", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return p


def resolve_config(args):
    values = {}
    if args.config:
        values.update(load_config(args.config))
    for k in _KEYS:
        v = getattr(args, k, None)
        if v is not None:
            values[k] = v
    return RunConfig(subcommand=args.subcommand, **values).validate()


# ---------------------------------------------------------------------------
# subcommands

def _table(n):
    return build_prime_table(max(int(n), 1))


def cmd_field(cfg, out, digest):
    table = _table(cfg.n_primes)
    files = []
    for s in range(min(cfg.n_samples, 16)):
        ph = fe.sample_phases(table, cfg.seed, s)
        dr = fe.sample_gaussians(table, cfg.seed, s)
        for grid in (fe.eval_field(ph, cfg.n_primes, cfg.grid_size),
                     fe.eval_gaussian_field(dr, cfg.n_primes, cfg.grid_size)):
            rows = list(zip(grid.x, grid.values))
            files.append(write_table(out / f"field_{grid.label}_s{s}", ["x", "value"], rows, digest,
                                     cfg.format))
    write_json(out / "field_manifest.json",
               {"seed": cfg.seed, "n_primes": cfg.n_primes, "M": cfg.grid_size, "labels": ["X", "G"],
                "streams": list(range(min(cfg.n_samples, 16))), "files": [f.name for f in files]},
               digest)
    return files


def cmd_kernel(cfg, out, digest):
    n = max(cfg.n_primes, 1)
    table = _table(n)
    rows, skipped = kernel.kernel_table(cfg.kernel_lags, table, n)
    f1 = write_table(out / "kernel_table", ["u", "psi_N", "psi_limit_zeta", "psi_limit_prime", "g"],
                     rows, digest, cfg.format)
    lags = np.geomspace(1e-4, 1.0, 1000)
    bound = kernel.kernel_bound_check(table, n, lags)
    nc = kernel.normalization(table, n, cfg.beta)
    doc = {"bound_check": dataclasses.asdict(bound), "skipped_lags": skipped,
           "note": "u = 0 omitted: the limit kernel has a logarithmic pole there" if skipped else "",
           "normalization": {"log_norm_exact": nc.log_norm_exact,
                             "log_norm_gaussian": nc.log_norm_gaussian, "gap": nc.gap}}
    f2 = write_json(out / "kernel_report.json", doc, digest)
    return [f1, f2]


def cmd_chaos(cfg, out, digest):
    n = max(cfg.n_primes, 2)
    table = _table(n)
    r_list = sorted(cfg.r_list, reverse=True)
    r_max = r_list[0]
    level = max(cfg.level, int(math.ceil(-math.log2(min(r_list)))) + 1)
    x0, x1 = 0.5 - r_max, 0.5 + r_max
    masses = chaos.sample_box_masses(table, [n], [cfg.beta], cfg.n_samples, level, x0, x1,
                                     seed=cfg.seed, workers=cfg.workers)[cfg.beta, n]
    params = chaos.ChaosParams(cfg.beta, n)
    rows, oracle_rows, fits, notes = [], [], [], []
    for q in cfg.q_list:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            est = chaos.moments_from_masses(masses, q, r_list, level, x0, beta=cfg.beta)
        notes += [str(w.message) for w in caught]
        rows += [(e.q, e.r, e.moment, e.se, e.n_samples) for e in est]
        if len(est) >= 4:
            fits.append(chaos.scaling_exponent_fit(est, q, cfg.beta).to_dict())
        if q == 1:
            oracle_rows += [(1.0, r, 2 * r) for r in r_list]
        elif q == 2:
            try:
                ex = chaos.second_moment_boxes_exact(r_list, params, table)
                oracle_rows += [(2.0, r, float(v)) for r, v in zip(r_list, ex)]
            except chaos.MomentBarrierError as exc:
                notes.append(f"warning: {exc}")
    f1 = write_table(out / "moments", ["q", "r", "moment", "se", "n_samples"], rows, digest, cfg.format)
    f2 = write_table(out / "moments_oracle", ["q", "r", "oracle"], oracle_rows, digest, cfg.format)
    mart = chaos.martingale_check(params, max(2, n // 10), n, (0.0, 1.0), 10, 200, cfg.seed, table,
                                  grid_size=cfg.grid_size)
    n_list = sorted(v for v in cfg.n_list if v <= n) or [n]
    crit = chaos.critical_mass_study(n_list, cfg.n_samples, cfg.seed, table, grid_size=cfg.grid_size,
                                     workers=cfg.workers)
    doc = {"fits": fits, "notes": notes,
           "martingale": {"n_base": mart.n_base, "n_extended": mart.n_extended,
                          "ratios": mart.ratios, "z": mart.z_scores, "aggregate_z": mart.aggregate_z},
           "critical": [dataclasses.asdict(c) for c in crit]}
    f3 = write_json(out / "chaos_summary.json", doc, digest)
    return [f1, f2, f3]


def cmd_coupling(cfg, out, digest):
    sizes = sorted(cfg.block_sizes)
    start = 1000
    table = _table(start + max(sizes))
    records = []
    for n in sizes:
        try:
            a = coupling.audit_block(table, (start, start + n - 1), cfg.n_samples, cfg.seed,
                                     grid_resolution=256)
            rec = dataclasses.asdict(a)
            rec.update(coupled=True, chain_ok=a.chain_ok())
        except coupling.TailNotDecayedError as exc:
            rec = {"n": n, "coupled": False, "reason": str(exc)}
        records.append(rec)
    return [write_json(out / "coupling_audit.json", {"records": records, "block_start": start}, digest)]


def cmd_critical(cfg, out, digest):
    n_list = sorted(cfg.n_list)
    reps = critical.comparison_conditions(n_list)
    f1 = write_table(out / "comparison_report", ["N", "t", "sup_diff", "offdiag_005", "offdiag_01", "offdiag_02"],
                     [r.row() for r in reps], digest, cfg.format)
    off = [r.offdiag[0.1] for r in reps]
    lags = np.linspace(0.0, 1.0, 101)
    doc = {"offdiag_01_decreasing": bool(all(b < a for a, b in zip(off, off[1:]))),
           "diag_gap": {str(r.n_primes): r.diag_gap for r in reps},
           "stage_gaps": {str(n): critical.stage_gaps(n, lags) for n in n_list}}
    f2 = write_json(out / "critical_summary.json", doc, digest)
    t = reps[-1].t
    g = critical.sample_reference_field(t, cfg.grid_size, cfg.seed)
    f3 = write_table(out / "reference_field", ["x", "value"], list(zip(g.x, g.values)), digest, cfg.format)
    return [f1, f2, f3]


COMMANDS = {"field": cmd_field, "kernel": cmd_kernel, "chaos": cmd_chaos,
            "coupling": cmd_coupling, "critical": cmd_critical}


def run(cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    digest = manifest_hash(cfg.manifest())
    write_json(out / "manifest.json", {"config": cfg.manifest()}, digest)
    dump_config(cfg, out / "manifest.ini", digest)
    names = [cfg.subcommand] if cfg.subcommand != "all" else list(COMMANDS)
    files = []
    for name in names:
        log.info("running %s", name)
        files += COMMANDS[name](cfg, out, digest)
    return files


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        files = run(cfg)
    except (chaos.MomentBarrierError, ResourceLimitError, ConvergenceError,
            critical.FactorizationError, FloatingPointError) as exc:
        print(f"zetachaos: numeric guard: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, TypeError) as exc:
        print(f"zetachaos: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"zetachaos: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for f in files:
        print(f)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
