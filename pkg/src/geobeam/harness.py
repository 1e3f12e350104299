"""Scenario configs, the end-to-end pipeline, and verification batteries."""

from __future__ import annotations

import copy
import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import bound as bd
from . import eigenlab as el
from .conormal import Submanifold
from .cover import (
    CoverError,
    _lambda_for,
    build_good_cover,
    check_coloring,
    check_cover_property,
    classify_looping,
    partition_single_window,
    union_nonlooping,
)
from .discrete import DiscreteHyperbolicSystem
from .flow import HorizonError, PreconditionError, StiffnessError
from .io import save_cover, write_csv
from .ladder import CatLeaf, CatMapLeafCover, cat_certificate, dyadic_ladder, flow_certificate
from .manifold import GeometryError, RoundSphere, get_model
from .quadrature import QuadratureError

SCHEMA_VERSION = 1
SCENARIO_DIR = Path(__file__).with_name("scenarios")

# allowed keys per section; None marks a free-form mapping
SCHEMA = {
    "schema_version": int,
    "name": str,
    "seed": int,
    "backend": str,
    "model": {"name": str, "params": None},
    "H": {"kind": str, "x": list, "v": list, "length": float},
    "cover": {"tau": float, "r": float, "D_max": int, "mc_samples": int},
    "window": {"t0": float, "T0": float},
    "partition": {"kind": str},
    "bound": {"h": list, "lambda_hat": float, "schedule": {"kind": str, "eps": float, "c_tilde": float}},
    "eigen": {"family": str, "H": str, "degrees": list, "modes": list},
    "catmap": {"matrix": list, "length": float, "r": float},
    "output": {"dir": str},
}
REQUIRED = ("schema_version", "seed", "backend")


class ConfigError(ValueError):
    pass


class InvariantFailure(RuntimeError):
    pass


NUMERIC_ERRORS = (HorizonError, StiffnessError, QuadratureError, FloatingPointError, bd.InfeasibleError,
                  el.PrecisionError, np.linalg.LinAlgError, GeometryError)


# ---------------------------------------------------------------------
# scenarios


def _check_section(d, schema, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a mapping")
    for k, v in d.items():
        if k not in schema:
            raise ConfigError(f"{where}: unknown key {k!r} (allowed: {sorted(schema)})")
        sub = schema[k]
        if v is None or sub is None:
            continue
        if isinstance(sub, dict):
            _check_section(v, sub, f"{where}.{k}")
        elif sub is float:
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise ConfigError(f"{where}.{k}: expected a number")
        elif not isinstance(v, sub):
            raise ConfigError(f"{where}.{k}: expected {sub.__name__}")


@dataclass
class Scenario:
    data: dict
    source: str = "<dict>"

    @classmethod
    def from_dict(cls, d: dict, source: str = "<dict>") -> "Scenario":
        d = copy.deepcopy(d)
        _check_section(d, SCHEMA, "scenario")
        for k in REQUIRED:
            if k not in d:
                raise ConfigError(f"scenario: missing required key {k!r}")
        if d["schema_version"] != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {d['schema_version']} (expected {SCHEMA_VERSION})")
        if d["backend"] not in ("flow", "catmap"):
            raise ConfigError("backend must be 'flow' or 'catmap'")
        if d["backend"] == "flow":
            for k in ("model", "H", "cover", "window"):
                if k not in d:
                    raise ConfigError(f"flow scenario needs a {k!r} section")
        else:
            for k in ("catmap", "window"):
                if k not in d:
                    raise ConfigError(f"catmap scenario needs a {k!r} section")
        part = d.get("partition", {}) or {}
        if part.get("kind", "single_window") not in ("single_window", "dyadic_ladder"):
            raise ConfigError("partition.kind must be single_window or dyadic_ladder")
        return cls(d, source)

    @classmethod
    def load(cls, path) -> "Scenario":
        path = resolve_config(path)
        try:
            d = yaml.safe_load(Path(path).read_text())
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: {e}") from None
        return cls.from_dict(d or {}, str(path))

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    def with_overrides(self, seed: Optional[int] = None, out: Optional[str] = None) -> "Scenario":
        d = copy.deepcopy(self.data)
        if seed is not None:
            d["seed"] = int(seed)
        if out is not None:
            d["output"] = {"dir": str(out)}
        return Scenario.from_dict(d, self.source)

    def hash(self) -> str:
        """Hash of everything that affects results (the output location excluded)."""
        d = {k: v for k, v in self.data.items() if k != "output"}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"), default=float)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @property
    def out_dir(self) -> Path:
        return Path((self.data.get("output") or {}).get("dir", "geobeam_out"))


def resolve_config(name) -> Path:
    """A path as given, else under GEOBEAM_DATA_DIR, else a bundled scenario name."""
    p = Path(name)
    if p.is_file():
        return p
    dirs = []
    if os.environ.get("GEOBEAM_DATA_DIR"):
        dirs.append(Path(os.environ["GEOBEAM_DATA_DIR"]))
    dirs.append(SCENARIO_DIR)
    for d in dirs:
        for cand in (d / str(name), d / f"{name}.yaml"):
            if cand.is_file():
                return cand
    raise ConfigError(f"config {name!r} not found (searched {[str(d) for d in dirs]})")


def bundled_scenarios() -> list[str]:
    return sorted(p.stem for p in SCENARIO_DIR.glob("*.yaml"))


def build_submanifold(model, spec: dict) -> Submanifold:
    kind = spec.get("kind")
    if kind == "point":
        return Submanifold.point(model, np.asarray(spec["x"], float))
    if kind == "geodesic":
        return Submanifold.geodesic(model, spec["x"], spec["v"], spec["length"])
    if kind == "equator":
        if not isinstance(model, RoundSphere) or model.dim != 2:
            raise ConfigError("H.kind 'equator' needs the round 2-sphere")
        return el.equator(model)
    raise ConfigError(f"unknown H.kind {kind!r}")


def build_model(spec: dict):
    try:
        return get_model(spec["name"], **(spec.get("params") or {}))
    except KeyError as e:
        raise ConfigError(str(e)) from None
    except TypeError as e:
        raise ConfigError(f"model params: {e}") from None


# ---------------------------------------------------------------------
# pipeline


@dataclass
class RunReport:
    scenario_hash: str
    timings: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    invariants: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return not all(self.invariants.values())

    def check(self, name: str, ok: bool):
        # append-only: a name once recorded keeps its first verdict unless both pass
        self.invariants[name] = bool(ok) and self.invariants.get(name, True)

    def to_dict(self):
        return {"scenario_hash": self.scenario_hash, "timings": self.timings, "artifacts": self.artifacts,
                "invariants": self.invariants, "failed": self.failed, "summary": self.summary}


STAGES = ("cover", "loops", "partition", "bound", "spectrum")


class _Stage:
    def __init__(self, report, name, inputs=None):
        self.report, self.name, self.inputs = report, name, inputs or {}

    def __enter__(self):
        self.t = time.perf_counter()
        return self

    def __exit__(self, et, ev, tb):
        self.report.timings[self.name] = time.perf_counter() - self.t
        if ev is not None and not isinstance(ev, (ConfigError, InvariantFailure)) and not getattr(ev, "_staged", False):
            echo = ", ".join(f"{k}={v}" for k, v in self.inputs.items())
            ev.args = (f"stage {self.name} ({echo}): {ev}",) + ev.args[1:]
            ev._staged = True
        return False


def _ledger_for(sc: Scenario, model=None, lam=None) -> bd.ConstantsLedger:
    b = sc.data.get("bound") or {}
    if b.get("lambda_hat") is not None:
        lam, prov = float(b["lambda_hat"]), "config"
    else:
        prov = "empirical-fit"
    c_t = ((b.get("schedule") or {}).get("c_tilde"))
    cov = sc.data.get("cover") or {}
    led = bd.ConstantsLedger.standard(lam, tau=cov.get("tau", 0.5), D=cov.get("D_max", 8), c_tilde=c_t,
                                      lambda_provenance=prov)
    return led


def run(sc: Scenario, upto: str = "spectrum", threads: int = 1) -> RunReport:
    """Execute the pipeline up to stage ``upto`` and write its artifacts."""
    if upto not in STAGES:
        raise ConfigError(f"unknown stage {upto!r}")
    stop = STAGES.index(upto)
    h = sc.hash()
    rep = RunReport(h)
    out = sc.out_dir
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(sc.seed)
    d = sc.data

    def emit(name, columns, rows):
        p = write_csv(out / name, columns, rows, h)
        rep.artifacts.append(str(p))

    partition = None
    lam_hat = None
    if d["backend"] == "flow":
        model = build_model(d["model"])
        H = build_submanifold(model, d["H"])
        cv = d["cover"]
        with _Stage(rep, "cover", {"model": d["model"]["name"], "H": d["H"].get("kind"), **cv}):
            try:
                cover = build_good_cover(H, float(cv["tau"]), float(cv["r"]), D_max=cv.get("D_max"))
            except CoverError as e:
                rep.check("color_count_within_D_max", False)
                raise InvariantFailure(str(e)) from None
            cover.threads = threads
            rep.check("color_count_within_D_max", True)
            rep.check("coloring_disjoint_at_3r", check_coloring(cover))
            misses = check_cover_property(cover, int(cv.get("mc_samples", 1000)), rng)
            rep.check("cover_property", misses == 0)
            rep.artifacts.append(str(save_cover(out / "cover.json", cover, d["model"], d["H"])))
            emit("cover.csv", [("tube_id", "index"), ("u", "parameter"), ("w", "fiber"), ("color", "class")]
                 + [(f"x{i}", "chart") for i in range(cover.X.shape[1])]
                 + [(f"v{i}", "velocity") for i in range(cover.V.shape[1])],
                 [[t.id, t.center.u, t.center.w, cover.colors[t.id], *cover.X[t.id], *cover.V[t.id]]
                  for t in cover.tubes])
            rep.summary.update(N=cover.N, D=cover.D, r=cover.r, tau=cover.tau)
        if stop >= 1:
            t0, T0 = float(d["window"]["t0"]), float(d["window"]["T0"])
            lam_hat = _lambda_for(model, (d.get("bound") or {}).get("lambda_hat"))
            with _Stage(rep, "loops", {"t0": t0, "T0": T0, "lambda_hat": lam_hat}):
                report = classify_looping(cover, t0, T0, lam_hat=lam_hat, threads=threads)
                emit("loops.csv", [("tube_id", "index"), ("window_start", "time"), ("window_end", "time"),
                                   ("min_return_distance", "sasaki")], report.to_rows())
        if stop >= 2:
            kind = (d.get("partition") or {}).get("kind", "single_window")
            with _Stage(rep, "partition", {"kind": kind, "t0": t0, "T0": T0}):
                if kind == "single_window":
                    partition = partition_single_window(cover, report, t0, T0)
                else:
                    cert = flow_certificate(cover, T0)
                    partition = dyadic_ladder(cover, report, t0, T0, cert)
                rep.check("partition_union_verified", partition.verified)
                rep.check("partition_covers_all_tubes", len(partition.covered()) == cover.N)
                rep.check("union_nonlooping_double_density", union_nonlooping(cover, partition, 2))
                _emit_partition(emit, partition)
                rep.summary.update(B=int(len(partition.B)), bad_fraction=len(partition.B) / cover.N)
    elif d["backend"] == "catmap":
        cm = d["catmap"]
        system = DiscreteHyperbolicSystem(tuple(tuple(int(v) for v in row) for row in cm.get("matrix", [[2, 1], [1, 1]])))
        leaf = CatLeaf.seeded(system, length=float(cm.get("length", 4.0)), seed=sc.seed)
        lam_hat = float(np.log(abs(leaf.lambda_u)))
        with _Stage(rep, "cover"):
            cover = CatMapLeafCover(leaf, float(cm["r"]))
            emit("cover.csv", [("tube_id", "index"), ("s", "leaf length")], [[j, s] for j, s in enumerate(cover.centers)])
            rep.summary.update(N=cover.N, r=cover.r)
        if stop >= 1:
            t0, T0 = d["window"]["t0"], d["window"]["T0"]
            with _Stage(rep, "loops"):
                report = cover.looping(t0, T0)
                emit("loops.csv", [("tube_id", "index"), ("window_start", "steps"), ("window_end", "steps"),
                                   ("min_return_distance", "torus")], report.to_rows())
        if stop >= 2:
            with _Stage(rep, "partition"):
                partition = dyadic_ladder(cover, report, t0, T0, cat_certificate(cover, int(T0)))
                rep.check("partition_union_verified", partition.verified)
                rep.check("partition_covers_all_tubes", len(partition.covered()) == cover.N)
                _emit_partition(emit, partition)
                rep.summary.update(B=int(len(partition.B)), ladder=partition.counts.get("G"),
                                   ratio=partition.counts.get("ratio"))
    if stop >= 3 and d.get("bound") and partition is not None:
        with _Stage(rep, "bound", {"h": d["bound"].get("h"), "schedule": d["bound"].get("schedule")}):
            led = _ledger_for(sc, lam=lam_hat)
            b = d["bound"]
            sched = None
            if b.get("schedule"):
                s = b["schedule"]
                sched = bd.make_schedule(s["kind"], float(s["eps"]), b["h"], led, t0=float(d["window"]["t0"]))
            tau = float(d["cover"]["tau"]) if d["backend"] == "flow" else led.get("tau0")
            counts = bd.BoundCounts.from_partition(partition, k=None if d["backend"] == "flow" else 1,
                                                    D=None if d["backend"] == "flow" else 1, tau=tau)
            hs = sched.h_grid if sched is not None else [float(x) for x in b["h"]]
            ests = [bd.evaluate_bound(counts, float(x), led, sched) for x in hs]
            rep.check("bound_nonnegative", all(e.bound >= 0 for e in ests))
            emit("bound.csv", [("h", "1/frequency"), ("bad_term", "count^1/2"), ("good_term", "count^1/2"),
                               ("bound", "normalized"), ("classical", "lambda^((k-1)/2)"),
                               ("logImproved", "lambda^((k-1)/2)/sqrt(log lambda)"), ("ratio", "bound/classical")],
                 [e.row() for e in ests])
            emit("ledger.csv", [("name", "symbol"), ("value", "mixed"), ("provenance", "tag"), ("note", "text")],
                 led.to_rows())
            _gnuplot(out / "bound.gp", "bound.csv")
            rep.artifacts.append(str(out / "bound.gp"))
            rep.summary["bound"] = [e.bound for e in ests]
    if stop >= 4 and d.get("eigen"):
        with _Stage(rep, "spectrum", d["eigen"]):
            recs = spectrum_records(d["eigen"])
            k = 2 if d["eigen"].get("H", "pole") in ("pole", "point") else 1
            rows = []
            for r in recs:
                lam = r.lam
                cl = bd.baseline(lam, k, "classical") if lam > np.e else np.nan
                li = bd.baseline(lam, k, "logImproved") if lam > np.e else np.nan
                rows.append([lam, 1.0 / lam if lam else np.inf, r.value, cl, li])
            emit("spectrum.csv", [("lambda", "frequency"), ("h", "1/frequency"), ("value", "average"),
                                  ("baseline_classical", "lambda^((k-1)/2)"),
                                  ("baseline_logimproved", "lambda^((k-1)/2)/sqrt(log lambda)")], rows)
    (out / "report.json").write_text(json.dumps(rep.to_dict(), indent=1, sort_keys=True, default=float) + "\n")
    return rep


def _emit_partition(emit, partition):
    rows = [[int(j), "B", -1, np.nan, np.nan] for j in partition.B]
    for l, g in enumerate(partition.rungs):
        rows += [[int(j), "G", l, g.t, g.T] for j in g.G]
    rows.sort(key=lambda r: (r[0], r[2]))
    emit("partition.csv", [("tube_id", "index"), ("set", "label"), ("rung", "index"), ("t", "time"), ("T", "time")],
         rows)


def _gnuplot(path, csv_name):
    Path(path).write_text(
        "set datafile separator ','\nset logscale xy\nset key autotitle columnhead\n"
        f"plot '{csv_name}' every ::2 using 1:4 with linespoints title 'bound', "
        f"'' every ::2 using 1:7 with linespoints title 'ratio'\n"
    )


def spectrum_records(spec: dict):
    fam = spec.get("family", "zonal")
    if fam == "zonal":
        degrees = spec.get("degrees") or list(el.DEFAULT_DEGREES)
        where = spec.get("H", "pole")
        if where == "pole":
            return el.pole_records(degrees)
        if where == "equator":
            E = el.equator()
            return [el.average_over(E, el.sphere_zonal(int(l))) for l in degrees]
        raise ConfigError(f"eigen.H {where!r} not available for zonal family")
    if fam == "torus":
        from .manifold import FlatTorus

        modes = spec.get("modes") or [[0, j] for j in range(1, 9)]
        where = spec.get("H", "circle")
        T = FlatTorus(2)
        if where == "circle":
            H = Submanifold.curve(T, lambda u: np.array([u, 0.0]), (0.0, 2 * np.pi), periodic=True, label="x2=0")
        else:
            H = Submanifold.point(T, [0.0, 0.0])
        return [el.average_over(H, el.torus_eigenfunction(m)) for m in modes]
    raise ConfigError(f"unknown eigen.family {fam!r}")


# ---------------------------------------------------------------------
# verification batteries


SUITES = ("jacobi", "riccati", "cover", "ladder", "ift", "eigen")


def verify(suite: str, seed: int = 0) -> dict:
    """Run one invariant battery; returns {suite, checks: {name: [ok, detail]}, passed}."""
    if suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}; choose from {SUITES}")
    rng = np.random.default_rng(seed)
    checks = globals()[f"_verify_{suite}"](rng)
    return {"suite": suite, "checks": checks, "passed": all(v[0] for v in checks.values())}


def _verify_jacobi(rng):
    from .flow import conjugate_points, phase_point, propagate_linearization
    from .manifold import FlatTorus

    out = {}
    S2 = RoundSphere(2)
    seg = propagate_linearization(S2, phase_point(S2, [1.0, 0, 0], [0, 1.0, 0]), 7.0)
    pts = conjugate_points(seg).points
    ok = len(pts) == 2 and abs(pts[0][0] - np.pi) < 2e-3 and abs(pts[1][0] - 2 * np.pi) < 2e-3
    out["sphere2_conjugate_times"] = [ok and all(m == 1 for _, m in pts), str(pts)]
    S3 = RoundSphere(3)
    seg3 = propagate_linearization(S3, phase_point(S3, [1.0, 0, 0, 0], [0, 1.0, 0, 0]), 4.0)
    p3 = conjugate_points(seg3).points
    out["sphere3_multiplicity"] = [len(p3) == 1 and p3[0][1] == 2, str(p3)]
    T = FlatTorus(2)
    segT = propagate_linearization(T, phase_point(T, [0.0, 0], [1.0, 0.3]), 50.0, step=1e-2)
    out["torus_no_conjugate_points"] = [len(conjugate_points(segT).points) == 0, ""]
    drift = max(seg.wronskian_drift(), seg3.wronskian_drift())
    out["wronskian_constant"] = [drift < 1e-6, f"{drift:.2e}"]
    return out


def _verify_riccati(rng, trials: int = 200):
    from .flow import random_piecewise_curvature, riccati_bound_check

    worst = -np.inf
    for i in range(trials):
        k = float(rng.choice([0.5, 1.0, 2.0]))
        m = int(rng.choice([1, 2, 3]))
        R = random_piecewise_curvature(k, m, 0.0, 3.0, rng)
        res = riccati_bound_check(R, k, np.linspace(0.0, 3.0, 301), rng=rng)
        worst = max(worst, res["max_violation"])
    sat = riccati_bound_check(lambda t: -np.eye(1), 1.0, np.linspace(0.0, 3.0, 301))
    return {"zero_violations": [worst <= 1e-6, f"max violation {worst:.3e}"],
            "constant_curvature_saturates": [abs(sat["saturation_gap"]) <= 1e-6, f"{sat['saturation_gap']:.2e}"]}


def _verify_cover(rng):
    from .manifold import FlatTorus

    out = {}
    S2 = RoundSphere(2)
    H = Submanifold.point(S2, [0.0, 0.0, 1.0])
    cov = build_good_cover(H, 0.5, 0.05)
    rep = classify_looping(cov, 1.2, 7.0)
    part = partition_single_window(cov, rep, 1.2, 7.0)
    out["sphere_full_looping"] = [len(part.B) == cov.N, f"{len(part.B)}/{cov.N}"]
    T = FlatTorus(2)
    HT = Submanifold.point(T, [1.0, 2.0])
    ct = build_good_cover(HT, 0.5, 0.1)
    out["torus_coloring"] = [check_coloring(ct) and ct.D <= 8, f"D={ct.D}"]
    miss = check_cover_property(ct, 2000, rng)
    out["torus_cover_property"] = [miss == 0, f"misses={miss}"]
    return out


def _verify_ladder(rng):
    from .ladder import GeodesicTubeFamily, TranslateFamily, controlled_refinement, recurrence_gap_check
    from .manifold import HyperbolicHalfPlane

    out = {}
    leaf = CatLeaf.seeded(length=4.0, seed=int(rng.integers(1 << 30)))
    cov = CatMapLeafCover(leaf, 2.0**-6)
    rep = cov.looping(2, 256)
    part = dyadic_ladder(cov, rep, 2, 256, cat_certificate(cov, 256))
    out["ladder_union_verified"] = [part.verified and len(part.covered()) == cov.N, str(part.counts["G"])]
    lam = abs(leaf.lambda_s)
    ref = controlled_refinement(leaf, [(0.0, 2.0**-4)], lambda k: lam**k, 0.2, 2, 256)
    out["refinement_budget"] = [ref.feasible and ref.survivors_ok, f"{ref.used:.3g} <= {ref.budget:.3g}"]
    M = HyperbolicHalfPlane()
    fam = GeodesicTubeFamily(M, 1e-3)
    g = recurrence_gap_check(fam, fam.looping(TranslateFamily.seeded(M), 0.0, 20.0), 1e-3)
    out["recurrence_gap"] = [g.gap, f"intra {g.max_intra:.3g} < inter {g.min_inter:.3g}"]
    return out


def _verify_ift(rng):
    out = {}
    for name, f, B, Bt in IFT_FIXTURES:
        res = bd.quantitative_ift(f, 1.0, B, Bt, (1, 1, 1), rng=rng)
        S, lhs = bd.ift_conditions(1.0, B, Bt, (1, 1, 1), *res.radii)
        ok = float(S) < 1 and float(lhs) <= res.radii[0] and res.converged == res.samples
        out[name] = [ok and res.max_ratio <= res.S + 0.02, f"radii={res.radii}, S={res.S:.3g}"]
    return out


IFT_FIXTURES = (
    ("x0 - x1 x2", lambda x0, x1, x2: x0 - x1 * x2,
     (0.0, lambda r0, r1, r2: 0 * r0, lambda r0, r1, r2: 0 * r0), (lambda r0, r1, r2: r2, lambda r0, r1, r2: r1)),
    ("x0", lambda x0, x1, x2: x0, (0.0, 0.0, 0.0), (0.0, 0.0)),
    ("x0 - sin(x0) x1", lambda x0, x1, x2: x0 - np.sin(x0) * x1,
     (lambda r0, r1, r2: r1 * np.minimum(1.0, r0), 1.0, 0.0),
     (lambda r0, r1, r2: np.sin(np.minimum(r0, np.pi / 2)), 0.0)),
)


def _verify_eigen(rng):
    from .manifold import FlatTorus

    out = {}
    T = FlatTorus(2)
    circ = Submanifold.curve(T, lambda u: np.array([u, 0.0]), (0.0, 2 * np.pi), periodic=True)
    err = 0.0
    for m in [(0, 0), (0, 3), (1, 0), (2, 5), (0, 7), (4, 1)]:
        v = el.average_over(circ, el.torus_eigenfunction(m)).integral
        err = max(err, abs(v - (1.0 if m[0] == 0 else 0.0)))
    out["torus_circle_averages"] = [err < 1e-8, f"{err:.2e}"]
    pole = max(abs(el.sphere_zonal(l)(np.array([0.0, 0, 1])) - el.zonal_normalization(l)) for l in range(0, 401, 7))
    out["zonal_pole_values"] = [pole < 1e-8, f"{pole:.2e}"]
    pts = rng.standard_normal((50, 3))
    res = max(el.laplacian_residual(el.sphere_zonal(l), pts) for l in (3, 40, 200))
    out["zonal_residual"] = [res < 1e-6, f"{res:.2e}"]
    fit = el.growth_fit(el.pole_records(), "power")
    out["pole_exponent"] = [abs(fit["exponent"] - 0.5) <= 0.03, f"{fit['exponent']:.4f}"]
    return out


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, InvariantFailure):
        return 1
    if isinstance(exc, (ConfigError, PreconditionError, KeyError)):
        return 2
    if isinstance(exc, NUMERIC_ERRORS):
        return 3
    return 3
