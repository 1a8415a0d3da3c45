"""Batch front door: configuration, subcommands, ensemble orchestration, outputs.

Subcommands: sample | spectrum | verify | chi | evt.  Every run writes
JSON-lines records (first line is a meta record embedding the resolved
config and code version), summary CSV, and matplotlib figures next to them.
A run is reproducible bit-exactly from its config and seed; --replay points
at any earlier output file and reruns its embedded config.

Exit codes: 0 success, 1 theorem falsification (or module error),
2 config error.
"""

from __future__ import annotations

import concurrent.futures
import json
import math
import sys
from dataclasses import asdict, dataclass, field as dc_field, fields
from pathlib import Path

import click
import jsonschema
import numpy as np

from . import __version__, evt, figures, lattice, operator, variational, verify
from .field import TailSpec, derive_seed, sample as sample_field, tail_prob
from .lattice import ContinuumShape

THEOREMS = ("truncation", "l2", "gap", "inclusion", "decay", "martingale", "coupling")

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "specedge run configuration",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "d": {"type": "integer", "minimum": 1},
        "shape": {"type": "object"},
        "L": {"type": "integer", "minimum": 2},
        "L_values": {"type": "array", "items": {"type": "integer", "minimum": 2}},
        "rho": {"type": "number", "exclusiveMinimum": 0},
        "tail": {"type": "object"},
        "k": {"type": "integer", "minimum": 1},
        "ensemble": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "out": {"type": "string"},
        "threads": {"type": "integer", "minimum": 1},
        "theorems": {"type": "array", "items": {"enum": list(THEOREMS)}},
        "instances": {"type": "integer", "minimum": 1},
        "inject_fault": {"type": "boolean"},
        "A": {"type": ["number", "null"]},
        "R": {"type": ["integer", "null"]},
        "N_L": {"type": ["integer", "null"]},
        "R_L": {"type": ["integer", "null"]},
        "delta": {"type": "number"},
        "h": {"type": ["number", "null"]},
        "chi_n_max": {"type": ["integer", "null"]},
        "chi_tol": {"type": "number", "exclusiveMinimum": 0},
        "a_mc": {"type": "integer", "minimum": 100},
        "mass_radius": {"type": "integer", "minimum": 0},
        "tol": {"type": "number", "exclusiveMinimum": 0},
    },
}


@dataclass
class RunConfig:
    """Fully serializable run description; a run is reproducible from this
    plus nothing else."""

    d: int = 1
    shape: dict | None = None
    L: int = 100
    L_values: list | None = None
    rho: float = 1.0
    tail: dict | None = None
    k: int = 3
    ensemble: int = 2
    seed: int = 0
    out: str = "runs"
    threads: int = 1
    theorems: list = dc_field(default_factory=lambda: ["truncation"])
    instances: int = 100
    inject_fault: bool = False
    A: float | None = None
    R: int | None = None
    N_L: int | None = None
    R_L: int | None = None
    delta: float = 0.5
    h: float | None = None
    chi_n_max: int | None = None
    chi_tol: float = 1e-3
    a_mc: int = 2000
    mass_radius: int = 25
    tol: float = 1e-10

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def load(cls, config_path: str | None, overrides: dict) -> "RunConfig":
        data = {}
        if config_path:
            try:
                with open(config_path) as f:
                    data = json.load(f)
            except (OSError, json.JSONDecodeError) as e:
                raise click.UsageError(f"cannot read config {config_path}: {e}")
            _validate_config(data)
        for key, value in overrides.items():
            if value is not None and value != ():
                data[key] = list(value) if isinstance(value, tuple) else value
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise click.UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        _validate_config({k: v for k, v in cfg.to_json().items() if v is not None})
        return cfg

    def shape_obj(self) -> ContinuumShape:
        if self.shape is None:
            return ContinuumShape.box((0.0,) * self.d, (1.0,) * self.d)
        try:
            return ContinuumShape.from_json(self.shape)
        except (KeyError, ValueError) as e:
            raise click.UsageError(f"bad shape: {e}")

    def tail_spec(self) -> TailSpec:
        obj = dict(self.tail or {"kind": "exact"})
        obj["rho"] = self.rho
        try:
            return TailSpec.from_json(obj)
        except ValueError as e:
            raise click.UsageError(f"bad tail spec: {e}")


def _validate_config(data: dict):
    try:
        jsonschema.validate(data, CONFIG_SCHEMA)
    except jsonschema.ValidationError as e:
        raise click.UsageError(f"config does not match schema: {e.message}")


def config_schema() -> dict:
    """The published JSON schema for config files."""
    return CONFIG_SCHEMA


# --------------------------------------------------------------------------
# deterministic writers
# --------------------------------------------------------------------------


def _jsonl_line(obj) -> str:
    return json.dumps(obj, sort_keys=True) + "\n"


def _embedded_config(cfg: RunConfig) -> dict:
    # out and threads are execution details: excluding them keeps reruns of
    # the same scientific config byte-identical regardless of where and how
    # wide they run
    return {k: v for k, v in cfg.to_json().items() if k not in ("out", "threads")}


def _stamp(command: str, cfg: RunConfig) -> str:
    embedded = json.dumps(_embedded_config(cfg), sort_keys=True)
    return f"specedge {__version__} {command} config={embedded}"


def _write_jsonl(path: Path, command: str, cfg: RunConfig, records):
    meta = {
        "type": "meta",
        "command": command,
        "config": _embedded_config(cfg),
        "version": __version__,
    }
    with open(path, "w") as f:
        f.write(_jsonl_line(meta))
        for rec in records:
            f.write(_jsonl_line(rec))


def _write_csv(path: Path, header, rows, stamp: str | None = None):
    with open(path, "w") as f:
        if stamp:
            f.write(f"# {stamp}\n")
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(str(v) for v in row) + "\n")


def _read_meta(path: str) -> dict:
    try:
        with open(path) as f:
            first = f.readline().rstrip("\n")
        if first.startswith("# specedge "):
            head, _, cfg_json = first.partition(" config=")
            parts = head.split()
            return {
                "type": "meta",
                "command": parts[3],
                "config": json.loads(cfg_json),
                "version": parts[2],
            }
        meta = json.loads(first)
        if meta.get("type") != "meta":
            raise ValueError("first line is not a meta record")
        return meta
    except (OSError, ValueError, IndexError) as e:
        raise click.UsageError(f"cannot replay {path}: {e}")


def _resolve_config(command: str, config, replay, overrides: dict) -> RunConfig:
    if replay:
        meta = _read_meta(replay)
        if meta.get("command") != command:
            raise click.UsageError(
                f"replay file was produced by '{meta.get('command')}', not '{command}'"
            )
        cfg = RunConfig.load(None, meta["config"])
        if overrides.get("out") is not None:
            cfg.out = overrides["out"]
        return cfg
    return RunConfig.load(config, overrides)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------
# ensemble workers (top level so they pickle under process pools)
# --------------------------------------------------------------------------

_WORKER_STATE: dict = {}

# above this region size the per-component eigensolves are skipped and only
# the raw region size is recorded
_REGION_SOLVE_CAP = 2500


def _init_worker(payload):
    _WORKER_STATE["payload"] = payload


def _sample_record(index: int) -> dict:
    domain, spec, master_seed, k, mass_radius, tol, region_params = _WORKER_STATE["payload"]
    seed = derive_seed(master_seed, index)
    fld = sample_field(domain, spec, seed)
    H = operator.assemble(domain, fld)
    res = operator.top_eigs(H, k, tol=tol)
    fit = evt.decay_fit(res, 1)
    rec = {
        "type": "sample",
        "sample": index,
        "seed": seed,
        "eigenvalues": [float(v) for v in res.eigenvalues],
        "centers": [list(c) for c in res.centers],
        "residuals": [float(r) for r in res.residuals],
        "max_xi": fld.max_value(),
        "gap_stat": evt.chi_gap_statistic(res, fld),
        "mass": evt.localization_mass(res, 1, mass_radius),
        "near_slope": fit.c2,
        "far_slope": fit.far_slope,
    }
    if region_params is not None:
        from . import regions

        r_reg, a_reg = region_params
        lam1 = float(res.eigenvalues[0])
        region = regions.large_field_region(domain, fld, r_reg, a_reg, lam1)
        rec["region_size"] = len(region)
        if len(region) <= _REGION_SOLVE_CAP:
            dec = regions.extract(domain, fld, r_reg, a_reg, lam1)
            rec["n_components"] = len(dec.components)
            rec["n_trimmed"] = int(sum(dec.trimmed))
            diameters = dec.component_diameters()
            rec["max_component_diameter"] = max(diameters) if diameters else 0
        else:
            rec["n_components"] = None
            rec["n_trimmed"] = None
            rec["max_component_diameter"] = None
    return rec


def _ensemble_records(
    domain, spec, cfg: RunConfig, k: int, region_params=None
) -> list[dict]:
    payload = (domain, spec, cfg.seed, k, cfg.mass_radius, cfg.tol, region_params)
    if cfg.threads <= 1:
        _init_worker(payload)
        return [_sample_record(i) for i in range(cfg.ensemble)]
    with concurrent.futures.ProcessPoolExecutor(
        max_workers=cfg.threads, initializer=_init_worker, initargs=(payload,)
    ) as ex:
        return list(ex.map(_sample_record, range(cfg.ensemble)))


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


@click.group()
@click.version_option(__version__)
def main():
    """Spectral-edge simulation and verification toolkit."""


_common = [
    click.option("--config", type=click.Path(), default=None, help="JSON config file."),
    click.option("--replay", type=click.Path(), default=None,
                 help="Reproduce the run embedded in an earlier output file."),
    click.option("--seed", type=int, default=None),
    click.option("--out", type=click.Path(), default=None),
    click.option("--threads", type=int, default=None),
]


def _with_common(fn):
    for opt in reversed(_common):
        fn = opt(fn)
    return fn


@main.command("sample")
@_with_common
@click.option("--L", "L", type=int, default=None)
@click.option("--rho", type=float, default=None)
@click.option("--d", "d", type=int, default=None)
def cmd_sample(config, replay, seed, out, threads, L, rho, d):
    """Draw one potential field and report its empirical tail."""
    cfg = _resolve_config(
        "sample", config, replay,
        {"seed": seed, "out": out, "threads": threads, "L": L, "rho": rho, "d": d},
    )
    out_dir = _out_dir(cfg)
    stamp = _stamp("sample", cfg)
    figures.set_run_stamp(stamp)
    spec = cfg.tail_spec()
    domain = lattice.scale_domain(cfg.shape_obj(), cfg.L)
    fld = sample_field(domain, spec, cfg.seed)
    record = {"type": "field", "domain": domain.to_json(), "field": fld.to_json()}
    _write_jsonl(out_dir / "field.jsonl", "sample", cfg, [record])
    rs = [0.0, cfg.rho, 2.0 * cfg.rho]
    rows = []
    emp, theo = [], []
    for r in rs:
        e = float(np.mean(fld.values > r))
        t = tail_prob(spec, r)
        emp.append(e)
        theo.append(t)
        n = len(domain)
        se = math.sqrt(max(t * (1 - t), 1.0 / n) / n)
        rows.append((r, e, t, se))
    _write_csv(out_dir / "tails.csv", ["r", "empirical", "theoretical", "mc_stderr"], rows,
               stamp=stamp)
    figures.save_tail_curve(rs, emp, theo, out_dir / "fig_tails.png")
    click.echo(f"wrote {out_dir}/field.jsonl, tails.csv, fig_tails.png")


@main.command("spectrum")
@_with_common
@click.option("--L", "L", type=int, default=None)
@click.option("--rho", type=float, default=None)
@click.option("--k", "k", type=int, default=None)
@click.option("--ensemble", type=int, default=None)
@click.option("--d", "d", type=int, default=None)
def cmd_spectrum(config, replay, seed, out, threads, L, rho, k, ensemble, d):
    """Ensemble of top-k spectra with localization statistics."""
    cfg = _resolve_config(
        "spectrum", config, replay,
        {"seed": seed, "out": out, "threads": threads, "L": L, "rho": rho,
         "k": k, "ensemble": ensemble, "d": d},
    )
    out_dir = _out_dir(cfg)
    stamp = _stamp("spectrum", cfg)
    figures.set_run_stamp(stamp)
    spec = cfg.tail_spec()
    shape = cfg.shape_obj()
    domain = lattice.scale_domain(shape, cfg.L)
    if cfg.k > len(domain):
        raise click.UsageError(f"k = {cfg.k} exceeds |D_L| = {len(domain)}")
    region_params = (cfg.R if cfg.R is not None else 3,
                     cfg.A if cfg.A is not None else 2.0)
    records = _ensemble_records(domain, spec, cfg, cfg.k, region_params=region_params)
    plan = None
    try:
        plan = evt.make_plan(shape, cfg.L, R_L=cfg.R_L, N_L=cfg.N_L, domain=domain)
        a_est = evt.estimate_a_L(spec, plan, cfg.a_mc, derive_seed(cfg.seed, cfg.L))
    except ValueError:
        plan = None
    if plan is not None:
        log_dl = math.log(len(domain))
        for rec in records:
            rec["a_L"] = a_est.value
            rec["heights"] = [
                (lam - a_est.value) * log_dl / cfg.rho for lam in rec["eigenvalues"]
            ]
    _write_jsonl(out_dir / "samples.jsonl", "spectrum", cfg, records)
    header = (
        ["sample", "seed"]
        + [f"lambda_{j+1}" for j in range(cfg.k)]
        + ["max_xi", "gap_stat", "mass", "near_slope", "n_components"]
    )
    rows = [
        [r["sample"], r["seed"], *r["eigenvalues"], r["max_xi"], r["gap_stat"],
         r["mass"], r["near_slope"], r["n_components"]]
        for r in records
    ]
    _write_csv(out_dir / "summary.csv", header, rows, stamp=stamp)
    figures.save_spectrum_strip(
        [r["eigenvalues"] for r in records], out_dir / "fig_spectrum.png"
    )
    click.echo(f"wrote {out_dir}/samples.jsonl, summary.csv, fig_spectrum.png")


def _run_campaign(name: str, cfg: RunConfig) -> list[verify.CheckReport]:
    if name == "truncation":
        return verify.truncation_campaign(
            cfg.instances, cfg.seed, fault=cfg.inject_fault, A=cfg.A, R=cfg.R
        )
    if name == "l2":
        return verify.l2_campaign(cfg.instances, cfg.seed)
    if name == "gap":
        return verify.gap_campaign(cfg.instances, cfg.seed)
    if name == "inclusion":
        return verify.inclusion_campaign(cfg.instances, cfg.seed)
    if name == "decay":
        return verify.decay_campaign(cfg.instances, cfg.seed, delta=cfg.delta, h=cfg.h)
    if name == "martingale":
        return verify.martingale_campaign(min(cfg.instances, 50), cfg.seed)
    if name == "coupling":
        return verify.coupling_campaign(
            cfg.instances, cfg.seed, cfg.tail_spec(), cfg.shape_obj(), cfg.L,
            N_L=cfg.N_L, R_L=cfg.R_L, A=cfg.A,
        )
    raise click.UsageError(f"unknown theorem {name!r}")


@main.command("verify")
@_with_common
@click.option("--theorem", "theorems", multiple=True,
              type=click.Choice(list(THEOREMS) + ["all"]))
@click.option("--instances", type=int, default=None)
@click.option("--L", "L", type=int, default=None)
@click.option("--rho", type=float, default=None)
@click.option("--inject-fault", "inject_fault", is_flag=True, default=None, hidden=True)
def cmd_verify(config, replay, seed, out, threads, theorems, instances, L, rho, inject_fault):
    """Run deterministic theorem campaigns; exit 1 on any falsifying witness."""
    names = list(theorems)
    if "all" in names:
        names = list(THEOREMS)
    cfg = _resolve_config(
        "verify", config, replay,
        {"seed": seed, "out": out, "threads": threads, "instances": instances,
         "L": L, "rho": rho, "theorems": names or None, "inject_fault": inject_fault},
    )
    out_dir = _out_dir(cfg)
    stamp = _stamp("verify", cfg)
    figures.set_run_stamp(stamp)
    all_records = []
    summary_rows = []
    failures = []
    inapplicable_total = 0
    for name in cfg.theorems:
        reports = _run_campaign(name, cfg)
        summary = verify.summarize(reports)
        all_records.extend(r.to_json() for r in reports)
        summary_rows.append(
            [name, summary["total"], summary["counts"].get("pass", 0),
             summary["counts"].get("fail", 0),
             summary["counts"].get("vacuous", 0) + summary["counts"].get("inapplicable", 0)
             + summary["counts"].get("indeterminate", 0),
             summary["worst_margin"] if summary["worst_margin"] is not None else ""]
        )
        inapplicable_total += summary["counts"].get("inapplicable", 0)
        failures.extend(r for r in reports if r.status == "fail")
        figures.save_margin_hist(
            [r.margin for r in reports if r.status in ("pass", "fail")],
            out_dir / f"fig_margins_{name}.png",
            title=f"{name}: checker margins",
        )
    _write_jsonl(out_dir / "reports.jsonl", "verify", cfg, all_records)
    _write_csv(
        out_dir / "summary.csv",
        ["theorem", "total", "pass", "fail", "not_applicable", "worst_margin"],
        summary_rows,
        stamp=stamp,
    )
    if inapplicable_total:
        click.echo(f"warning: {inapplicable_total} instances inapplicable", err=True)
    if failures:
        witness = failures[0].to_json()
        (out_dir / "witness.json").write_text(json.dumps(witness, sort_keys=True, indent=2))
        click.echo("FALSIFYING WITNESS:\n" + json.dumps(witness, sort_keys=True), err=True)
        sys.exit(1)
    click.echo(f"wrote {out_dir}/reports.jsonl, summary.csv; all campaigns clean")


@main.command("chi")
@_with_common
@click.option("--rho", type=float, default=None)
@click.option("--d", "d", type=int, default=None)
def cmd_chi(config, replay, seed, out, threads, rho, d):
    """Tabulate chi over nested balls and extrapolate the infinite-volume value."""
    cfg = _resolve_config(
        "chi", config, replay,
        {"seed": seed, "out": out, "threads": threads, "rho": rho, "d": d},
    )
    out_dir = _out_dir(cfg)
    stamp = _stamp("chi", cfg)
    figures.set_run_stamp(stamp)
    n_max = cfg.chi_n_max if cfg.chi_n_max is not None else {1: 12, 2: 4}.get(cfg.d, 2)
    origin = (0,) * cfg.d
    rows = []
    records = []
    values = []
    prev = None
    for n in range(n_max + 1):
        C = lattice.ball(origin, n)
        sol = variational.solve_chi(C, cfg.rho, tol=1e-11)
        drop = "" if prev is None else prev - sol.chi
        rows.append([cfg.rho, cfg.d, n, len(C), sol.chi, drop, sol.iterations])
        records.append(
            {"type": "chi", "rho": cfg.rho, "d": cfg.d, "n": n, "sites": len(C),
             "chi": sol.chi, "kkt_residual": sol.kkt_residual, "method": sol.method}
        )
        values.append(sol.chi)
        if prev is not None and prev - sol.chi < cfg.chi_tol:
            break
        prev = sol.chi
    _write_jsonl(out_dir / "chi.jsonl", "chi", cfg, records)
    _write_csv(
        out_dir / "chi_table.csv",
        ["rho", "d", "n", "sites", "chi", "drop", "eigensolves"],
        rows,
        stamp=stamp,
    )
    figures.save_chi_curve(list(range(len(values))), values, out_dir / "fig_chi.png")
    click.echo(f"wrote {out_dir}/chi.jsonl, chi_table.csv, fig_chi.png")


@main.command("evt")
@_with_common
@click.option("--L", "L_values", multiple=True, type=int)
@click.option("--rho", type=float, default=None)
@click.option("--k", "k", type=int, default=None)
@click.option("--ensemble", type=int, default=None)
def cmd_evt(config, replay, seed, out, threads, L_values, rho, k, ensemble):
    """EVT pipeline: centering estimate, point clouds, Poisson test battery."""
    cfg = _resolve_config(
        "evt", config, replay,
        {"seed": seed, "out": out, "threads": threads, "rho": rho, "k": k,
         "ensemble": ensemble, "L_values": L_values or None},
    )
    out_dir = _out_dir(cfg)
    stamp = _stamp("evt", cfg)
    figures.set_run_stamp(stamp)
    spec = cfg.tail_spec()
    shape = cfg.shape_obj()
    l_values = cfg.L_values or [cfg.L]
    summary_rows = []
    ks_stats = []
    for L in l_values:
        try:
            domain = lattice.scale_domain(shape, L)
            plan = evt.make_plan(shape, L, R_L=cfg.R_L, N_L=cfg.N_L, domain=domain)
        except ValueError as e:
            raise click.UsageError(str(e))
        if cfg.k > len(domain):
            raise click.UsageError(f"k = {cfg.k} exceeds |D_L| = {len(domain)}")
        a_est = evt.estimate_a_L(spec, plan, cfg.a_mc, derive_seed(cfg.seed, L))
        sub = RunConfig(**{**cfg.to_json(), "L": L})
        records = _ensemble_records(domain, spec, sub, cfg.k)
        log_dl = math.log(len(domain))
        clouds = []
        for rec in records:
            points = tuple(
                (tuple(c / L for c in center), (lam - a_est.value) * log_dl / cfg.rho)
                for lam, center in zip(rec["eigenvalues"], rec["centers"])
            )
            clouds.append(evt.PointCloud(points=points, L=L, a_L=a_est.value, rho=cfg.rho))
            rec["heights"] = [h for _, h in points]
            rec["positions"] = [list(p) for p, _ in points]
            rec["L"] = L
        report = evt.poisson_tests(clouds, volume=shape.volume(),
                                   seed=derive_seed(cfg.seed, 0xD0C))
        _write_jsonl(out_dir / f"clouds_L{L}.jsonl", "evt", cfg, records)
        incs = np.sort(evt.exp_increments(clouds))
        n = len(incs)
        theo = -np.log(1.0 - (np.arange(1, n + 1) - 0.5) / n)
        _write_csv(
            out_dir / f"qq_L{L}.csv",
            ["exp1_quantile", "empirical_increment"],
            zip(theo, incs),
            stamp=stamp,
        )
        _write_csv(
            out_dir / f"heights_L{L}.csv",
            ["sample", "rank", "height", "position"],
            [
                (rec["sample"], j + 1, h, rec["positions"][j][0])
                for rec in records
                for j, h in enumerate(rec["heights"])
            ],
            stamp=stamp,
        )
        figures.save_exp_qq(incs, out_dir / f"fig_qq_L{L}.png",
                            title=f"W-increments vs Exp(1), L={L}")
        figures.save_cloud_scatter(clouds, out_dir / f"fig_cloud_L{L}.png",
                                   title=f"point clouds, L={L}")
        gaps = [r["gap_stat"] for r in records]
        masses = [r["mass"] for r in records]
        tests = report.tests
        summary_rows.append([
            L, a_est.value, a_est.stderr,
            tests["exp_increments_ks"][0], tests["exp_increments_ks"][1],
            tests["position_uniformity"][1],
            tests["position_height_independence"][1],
            float(np.mean(gaps)), float(np.mean(masses)),
        ])
        ks_stats.append(tests["exp_increments_ks"][0])
    _write_csv(
        out_dir / "evt_summary.csv",
        ["L", "a_L", "a_L_stderr", "ks_stat", "ks_pvalue", "uniformity_pvalue",
         "independence_pvalue", "mean_gap_stat", "mean_mass"],
        summary_rows,
        stamp=stamp,
    )
    if len(l_values) > 1:
        figures.save_ks_trend(l_values, ks_stats, out_dir / "fig_ks_trend.png")
    click.echo(f"wrote {out_dir}/evt_summary.csv and per-L clouds/qq/figures")


if __name__ == "__main__":
    main()
