"""Pipeline orchestration and the ``scrl`` command line tool.

Subcommands map to pipeline stages.  ``analyze`` runs everything; the
stage subcommands (``scr``, ``cr``, ``pairs``, ``lyapunov``, ``verify``,
``compare``) re-run one stage against cached artifacts in the output
directory, and ``oracle-check`` diffs the fast shortest-path machinery
against brute-force references.  All outputs are deterministic: repeated
runs with the same configuration produce byte-identical files.

Exit codes: 0 success, 1 configuration or missing-cache error, 2 crash,
3 ran to completion but a verified property failed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .chaingraph import (ChainGraph, build_chain_graph, compute_cr, compute_scr,
                         export_graph_csv, graph_from_edges, min_return_cost_all,
                         omega_budget)
from .flows import FlowModel, GridTransition, build_transition, load_sampled_transition, make_flow
from .lyapunov import (CombinedLyapunov, LyapunovField, combine_pairs,
                       sup_along_orbit, verify_lyapunov)
from .orbits import OrbitData, build_orbit_data
from .pairs import PairCatalog, default_radii, default_seed_stride, enumerate_pairs, select_cover
from .space import GridSpace, build_grid
from .stablesets import default_eta_samples

DEFAULT_GRID = {"circle": 256, "square": 32, "roof": 48, "identity": 64, "custom": 64}
DOMAIN_OF = {"circle": "circle", "square": "unit-square", "roof": "roof",
             "identity": "circle", "custom": None}


@dataclass
class RunConfig:
    """Everything needed to reproduce a run; serialized into metadata.json."""

    system: str = "circle"
    grid_n: int = 0                  # 0 = per-system default
    grid_domain: str = ""            # custom flows only
    epsilon: float = 0.05
    T: float = 1.0
    m_max: int = 4
    prune_radius: float = 0.0        # 0 = 10 * resolution
    radii: list = field(default_factory=list)
    seed_stride: int = 0
    neighborhood_scale: float = 0.0  # 0 = domain diameter
    eta_count: int = 32
    eta_lo: float = 0.01
    eta_hi: float = 0.99
    s_max: float = 20.0
    horizon_steps: int = 200
    t_probe: float = 1.0
    margin: float = 0.0              # 0 = adaptive
    output_dir: str = "scrl-out"
    rng_seed: int = 0
    flow_csv: str = ""
    threads: int = 0
    epsilon_max: float = 0.0         # largest budget of a sweep; 0 = epsilon

    def validate(self) -> None:
        if self.system not in DEFAULT_GRID:
            raise ConfigError(f"unknown system {self.system!r}")
        for name in ("epsilon", "T", "s_max", "t_probe"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("m_max", "horizon_steps", "eta_count"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.system == "custom" and not self.flow_csv:
            raise ConfigError("custom system needs --flow-csv")


class ConfigError(Exception):
    pass


class MissingCache(Exception):
    def __init__(self, artifact: str, prerequisite: str):
        super().__init__(
            f"missing {artifact}; run `scrl {prerequisite}` with the same "
            f"--out directory first")


@dataclass(eq=False)
class RunBundle:
    cfg: RunConfig
    space: GridSpace
    flow: FlowModel
    tr: GridTransition
    graph: ChainGraph
    orbit: OrbitData | None = None

    @property
    def prune_radius(self) -> float:
        return self.cfg.prune_radius or default_prune_radius(self.cfg, self.space)

    @property
    def scale(self) -> float:
        return self.cfg.neighborhood_scale or self.space.diameter

    def ensure_orbit(self) -> OrbitData:
        if self.orbit is None:
            self.orbit = build_orbit_data(
                self.flow, self.space, self.cfg.T,
                fine_horizon=self.cfg.s_max + 4 * self.cfg.T,
                horizon=self.cfg.horizon_steps * self.cfg.T,
                t_steps=self.cfg.horizon_steps)
        return self.orbit


def default_prune_radius(cfg: RunConfig, space: GridSpace) -> float:
    """Sparse by default, but never below the largest requested budget."""
    eps_max = cfg.epsilon_max or cfg.epsilon
    return max(10 * space.resolution, 1.25 * eps_max)


def build_bundle(cfg: RunConfig) -> RunBundle:
    cfg.validate()
    n = cfg.grid_n or DEFAULT_GRID[cfg.system]
    if cfg.system == "custom":
        domain = cfg.grid_domain or "circle"
        space = build_grid(domain, n)
        flow, tr = load_sampled_transition(cfg.flow_csv, space, cfg.T, cfg.m_max)
    else:
        space = build_grid(DOMAIN_OF[cfg.system], n)
        flow = make_flow(cfg.system)
        tr = build_transition(flow, space, cfg.T, cfg.m_max)
    prune = cfg.prune_radius or default_prune_radius(cfg, space)
    if max(cfg.epsilon, cfg.epsilon_max) > prune:
        raise ConfigError(
            f"epsilon {max(cfg.epsilon, cfg.epsilon_max)} exceeds prune radius "
            f"{prune:.4g}; chains at this budget would need pruned edges")
    graph = build_chain_graph(space, tr, flow, prune)
    return RunBundle(cfg=cfg, space=space, flow=flow, tr=tr, graph=graph)


# -- stages --------------------------------------------------------------


def stage_scr(bundle: RunBundle, epsilons: list[float]) -> list:
    limit = max(epsilons) + 10 * bundle.space.resolution
    return [compute_scr(bundle.graph, e, cost_limit=limit) for e in sorted(epsilons)]


def stage_cr(bundle: RunBundle, epsilons: list[float]) -> dict:
    return {e: compute_cr(bundle.graph, e) for e in sorted(epsilons)}


def stage_pairs(bundle: RunBundle, scr) -> PairCatalog:
    cfg = bundle.cfg
    space = bundle.space
    radii = cfg.radii or default_radii(space.resolution)
    stride = cfg.seed_stride or default_seed_stride(space.n)
    etas = default_eta_samples(cfg.eta_count, cfg.eta_lo, cfg.eta_hi)
    catalog = enumerate_pairs(
        bundle.graph, bundle.tr, space, cfg.epsilon, radii, stride, scr,
        bundle.ensure_orbit(), bundle.scale, etas, t_cap_steps=cfg.horizon_steps)
    return select_cover(catalog, scr, space)


def stage_lyapunov(bundle: RunBundle, catalog: PairCatalog
                   ) -> tuple[list[LyapunovField], CombinedLyapunov]:
    orbit = bundle.ensure_orbit()
    fields = []
    for rank, idx in enumerate(catalog.selected):
        fields.append(sup_along_orbit(catalog.pairs[idx], bundle.space, orbit,
                                      s_max=bundle.cfg.s_max, pair_index=rank))
    combined = combine_pairs(fields)
    if combined.n_pairs == 0:
        combined.H_values = np.zeros(bundle.space.n)
    return fields, combined


def adaptive_margin(cfg: RunConfig, space: GridSpace, n_pairs: int) -> float:
    if cfg.margin:
        return cfg.margin
    return max(1e-4, space.resolution / 10) * 3.0 ** (-n_pairs)


def stage_verify(bundle: RunBundle, catalog: PairCatalog,
                 fields: list[LyapunovField], scr) -> dict:
    margin = adaptive_margin(bundle.cfg, bundle.space, len(fields))
    selected_pairs = [catalog.pairs[i] for i in catalog.selected]
    return verify_lyapunov(
        fields, selected_pairs, bundle.space, bundle.ensure_orbit(), scr,
        t_probe=bundle.cfg.t_probe, margin=margin)


def run_pipeline(cfg: RunConfig, out: Path | None = None, export_graph: bool = False):
    """Full pipeline; returns (exit_code, result dict). Writes artifacts if out given."""
    bundle = build_bundle(cfg)
    scr_results = stage_scr(bundle, [cfg.epsilon])
    scr = scr_results[0]
    cr_members = stage_cr(bundle, [cfg.epsilon])[cfg.epsilon]
    catalog = stage_pairs(bundle, scr)
    fields, combined = stage_lyapunov(bundle, catalog)
    report = stage_verify(bundle, catalog, fields, scr)
    ok = not report["monotonicity_violations"] and report["strict_pass_fraction"] >= 0.99

    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_metadata(out, bundle)
        write_json(out / "scr.json", {"results": [r.to_json() for r in scr_results]})
        write_json(out / "cr.json", {"results": [{
            "epsilon": cfg.epsilon, "members": [int(i) for i in cr_members]}]})
        write_json(out / "pairs.json", catalog.to_json())
        for rank, fld in enumerate(fields):
            write_field_csv(out / f"lyapunov_pair_{rank}.csv", bundle.space, fld)
        write_combined_csv(out / "lyapunov_combined.csv", bundle.space, combined)
        write_json(out / "verify_report.json", report)
        if export_graph:
            export_graph_csv(bundle.graph, out / "graph.csv")
    result = {"bundle": bundle, "scr": scr, "cr": cr_members, "catalog": catalog,
              "fields": fields, "combined": combined, "report": report}
    return (0 if ok else 3), result


# -- serialization --------------------------------------------------------


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_plain(obj), sort_keys=True, indent=1) + "\n")


def write_metadata(out: Path, bundle: RunBundle) -> None:
    cfg = bundle.cfg
    cfg_dump = asdict(cfg)
    cfg_dump["output_dir"] = ""        # implicit in the file location
    meta = {
        "version": __version__,
        "config": cfg_dump,
        "resolved": {
            "grid_n": cfg.grid_n or DEFAULT_GRID[cfg.system],
            "n_points": bundle.space.n,
            "resolution": bundle.space.resolution,
            "pitch": bundle.space.pitch,
            "prune_radius": bundle.prune_radius,
            "neighborhood_scale": bundle.scale,
            "radii": cfg.radii or default_radii(bundle.space.resolution),
            "seed_stride": cfg.seed_stride or default_seed_stride(bundle.space.n),
            "threads": int(os.environ.get("SCRL_THREADS", "0") or 0),
        },
        "flow": bundle.flow.describe(),
    }
    write_json(out / "metadata.json", meta)


def write_field_csv(path: Path, space: GridSpace, fld: LyapunovField) -> None:
    with open(path, "w") as fh:
        fh.write("point_index,x,y,l,k,h\n")
        for i in range(space.n):
            x = float(space.points[i, 0])
            y = float(space.points[i, 1]) if space.dim > 1 else 0.0
            fh.write(f"{i},{x!r},{y!r},{float(fld.l_values[i])!r},"
                     f"{float(fld.k_values[i])!r},{float(fld.h_values[i])!r}\n")


def write_combined_csv(path: Path, space: GridSpace, combined: CombinedLyapunov) -> None:
    H = combined.H_values
    if H.size == 0:
        H = np.zeros(space.n)
    with open(path, "w") as fh:
        fh.write("point_index,x,y,H\n")
        for i in range(space.n):
            x = float(space.points[i, 0])
            y = float(space.points[i, 1]) if space.dim > 1 else 0.0
            fh.write(f"{i},{x!r},{y!r},{float(H[i])!r}\n")


def read_json(path: Path):
    if not path.exists():
        return None
    return json.loads(path.read_text())


# -- oracle check ----------------------------------------------------------


def floyd_warshall_reference(n: int, edges) -> np.ndarray:
    """Brute-force all-pairs matrix used to diff the fast paths."""
    dist = np.full((n, n), np.inf)
    np.fill_diagonal(dist, 0.0)
    for u, v, w in edges:
        dist[u, v] = min(dist[u, v], w)
    for k in range(n):
        for i in range(n):
            via = dist[i, k] + dist[k, :]
            dist[i] = np.minimum(dist[i], via)
    return dist


def oracle_check(seeds: int, rng_seed: int = 0, grid_checks: bool = True) -> dict:
    """Diff min_return_cost and omega_budget against the reference matrix.

    Random weights are dyadic (multiples of 2^-20) so both computations
    are exact in floating point and must agree bit for bit.
    """
    rng = np.random.default_rng(rng_seed)
    mismatches = 0
    for trial in range(seeds):
        n = int(rng.integers(4, 40))
        density = rng.uniform(0.05, 0.4)
        n_edges = max(1, int(n * n * density))
        u = rng.integers(0, n, n_edges)
        v = rng.integers(0, n, n_edges)
        w = rng.integers(1, 2 ** 20, n_edges) / 2.0 ** 20
        edges = list(zip(u.tolist(), v.tolist(), w.tolist()))
        g = graph_from_edges(n, edges)
        ref = floyd_warshall_reference(n, edges)
        mrc_ref = np.full(n, np.inf)
        for uu, vv, ww in edges:
            mrc_ref[uu] = min(mrc_ref[uu], ww + ref[vv, uu])
        if not np.array_equal(min_return_cost_all(g), mrc_ref):
            mismatches += 1
            continue
        eps = float(rng.uniform(0.1, 2.0))
        Y = sorted(set(rng.integers(0, n, 3).tolist()))
        seed_cost = np.full(n, np.inf)
        for uu, vv, ww in edges:
            if uu in Y:
                seed_cost[vv] = min(seed_cost[vv], ww)
        reach_ref = (seed_cost[:, None] + ref).min(axis=0)
        om_ref = np.nonzero(reach_ref < eps)[0]
        if not np.array_equal(omega_budget(g, Y, eps), om_ref):
            mismatches += 1
    report = {"trials": seeds, "mismatches": mismatches}
    if grid_checks:
        for system in ("circle", "square"):
            cfg = RunConfig(system=system, grid_n=16, epsilon=0.1)
            bundle = build_bundle(cfg)
            g = bundle.graph
            q = np.round(g.edge_w * 2 ** 30) / 2 ** 30
            gq = graph_from_edges(
                g.n, list(zip(g.edge_u.tolist(), g.edge_v.tolist(), q.tolist())),
                resolution=g.resolution)
            ref = floyd_warshall_reference(
                g.n, list(zip(g.edge_u.tolist(), g.edge_v.tolist(), q.tolist())))
            mrc_ref = np.full(g.n, np.inf)
            for uu, vv, ww in zip(g.edge_u, g.edge_v, q):
                mrc_ref[uu] = min(mrc_ref[uu], ww + ref[vv, uu])
            agree = np.array_equal(min_return_cost_all(gq), mrc_ref)
            report[f"grid_{system}_exact"] = bool(agree)
            if not agree:
                mismatches += 1
    report["mismatches"] = mismatches
    return report


# -- argument parsing --------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--system", default="circle",
                   choices=("circle", "square", "roof", "identity", "custom"))
    p.add_argument("--grid", type=int, default=0, dest="grid_n",
                   help="grid points (circle) or cells per side (planar); 0 = default")
    p.add_argument("--grid-domain", default="", help="domain for custom flows")
    p.add_argument("--epsilon", type=float, action="append", default=None,
                   help="chain budget; repeatable where a sweep makes sense")
    p.add_argument("--T", type=float, default=1.0, help="flow time step")
    p.add_argument("--m-max", type=int, default=4)
    p.add_argument("--prune-radius", type=float, default=0.0)
    p.add_argument("--radius", type=float, action="append", default=None, dest="radii")
    p.add_argument("--seed-stride", type=int, default=0)
    p.add_argument("--scale", type=float, default=0.0, dest="neighborhood_scale")
    p.add_argument("--eta-count", type=int, default=32)
    p.add_argument("--s-max", type=float, default=20.0)
    p.add_argument("--t-probe", type=float, default=1.0)
    p.add_argument("--margin", type=float, default=0.0)
    p.add_argument("--flow-csv", default="")
    p.add_argument("--config", default="", help="JSON config file; flags override it")
    p.add_argument("--out", default="scrl-out")


def config_from_args(args) -> tuple[RunConfig, list[float]]:
    base = {}
    if args.config:
        base = json.loads(Path(args.config).read_text())
    merged = dict(base)
    epsilons = args.epsilon or ([merged.get("epsilon", 0.05)])
    merged.update(
        system=args.system, grid_n=args.grid_n, grid_domain=args.grid_domain,
        epsilon=float(min(epsilons)), epsilon_max=float(max(epsilons)),
        T=args.T, m_max=args.m_max,
        prune_radius=args.prune_radius, radii=args.radii or merged.get("radii", []),
        seed_stride=args.seed_stride, neighborhood_scale=args.neighborhood_scale,
        eta_count=args.eta_count, s_max=args.s_max, t_probe=args.t_probe,
        margin=args.margin, flow_csv=args.flow_csv, output_dir=args.out)
    known = {f.name for f in RunConfig.__dataclass_fields__.values()}
    cfg = RunConfig(**{k: v for k, v in merged.items() if k in known})
    return cfg, sorted(float(e) for e in epsilons)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="scrl",
        description="Strong chain recurrence and Lyapunov synthesis on sampled flows")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("analyze", "scr", "cr", "compare", "pairs", "lyapunov", "verify"):
        p = sub.add_parser(name)
        _add_common(p)
        if name == "analyze":
            p.add_argument("--export-graph", action="store_true")
    oc = sub.add_parser("oracle-check")
    oc.add_argument("--seeds", type=int, default=100)
    oc.add_argument("--rng-seed", type=int, default=0)
    oc.add_argument("--out", default="")
    args = parser.parse_args(argv)

    try:
        return _dispatch(args)
    except (ConfigError, MissingCache, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:        # crash, distinct from property failure
        import traceback
        traceback.print_exc()
        return 2


def _dispatch(args) -> int:
    if args.command == "oracle-check":
        report = oracle_check(args.seeds, args.rng_seed)
        print(json.dumps(_plain(report), sort_keys=True))
        if args.out:
            write_json(Path(args.out) / "oracle_report.json", report)
        return 0 if report["mismatches"] == 0 else 3

    cfg, epsilons = config_from_args(args)
    out = Path(args.out)

    if args.command == "analyze":
        code, result = run_pipeline(cfg, out, export_graph=args.export_graph)
        rep = result["report"]
        print(f"scr members: {len(result['scr'].members)}  pairs: "
              f"{len(result['catalog'].selected)} selected of {len(result['catalog'].pairs)}  "
              f"residual: {len(result['catalog'].residual)}")
        print(f"monotonicity violations: {len(rep['monotonicity_violations'])}  "
              f"strict pass fraction: {rep['strict_pass_fraction']:.4f}")
        return code

    if args.command in ("scr", "cr", "compare"):
        bundle = build_bundle(cfg)
        out.mkdir(parents=True, exist_ok=True)
        write_metadata(out, bundle)
        code = 0
        if args.command in ("scr", "compare"):
            results = stage_scr(bundle, epsilons)
            write_json(out / "scr.json", {"results": [r.to_json() for r in results]})
            sizes = {r.epsilon: len(r.members) for r in results}
            print("scr members per epsilon:", json.dumps(_plain(sizes), sort_keys=True))
        if args.command in ("cr", "compare"):
            crs = stage_cr(bundle, epsilons)
            write_json(out / "cr.json", {"results": [
                {"epsilon": e, "members": [int(i) for i in m]} for e, m in sorted(crs.items())]})
            print("cr members per epsilon:",
                  json.dumps({repr(e): len(m) for e, m in sorted(crs.items())}))
        if args.command == "compare":
            inclusion = all(
                set(int(i) for i in r.members) <= set(int(i) for i in crs[r.epsilon])
                for r in results)
            write_json(out / "compare.json", {"scr_subset_of_cr": inclusion})
            print("scr subset of cr:", inclusion)
            code = 0 if inclusion else 3
        return code

    if args.command == "pairs":
        bundle = build_bundle(cfg)
        scr_cache = read_json(out / "scr.json")
        if scr_cache is None:
            raise MissingCache("scr.json", "scr")
        scr = _scr_from_cache(scr_cache, cfg.epsilon, bundle)
        catalog = stage_pairs(bundle, scr)
        write_json(out / "pairs.json", catalog.to_json())
        print(f"pairs: {len(catalog.pairs)} unique, {len(catalog.selected)} selected, "
              f"residual {len(catalog.residual)}")
        return 0

    if args.command == "lyapunov":
        bundle = build_bundle(cfg)
        pairs_cache = read_json(out / "pairs.json")
        if pairs_cache is None:
            raise MissingCache("pairs.json", "pairs")
        catalog = PairCatalog.from_json(pairs_cache)
        fields, combined = stage_lyapunov(bundle, catalog)
        for rank, fld in enumerate(fields):
            write_field_csv(out / f"lyapunov_pair_{rank}.csv", bundle.space, fld)
        write_combined_csv(out / "lyapunov_combined.csv", bundle.space, combined)
        print(f"lyapunov fields written for {len(fields)} pairs")
        return 0

    if args.command == "verify":
        bundle = build_bundle(cfg)
        pairs_cache = read_json(out / "pairs.json")
        if pairs_cache is None:
            raise MissingCache("pairs.json", "pairs")
        scr_cache = read_json(out / "scr.json")
        if scr_cache is None:
            raise MissingCache("scr.json", "scr")
        catalog = PairCatalog.from_json(pairs_cache)
        scr = _scr_from_cache(scr_cache, cfg.epsilon, bundle)
        fields, _ = stage_lyapunov(bundle, catalog)
        report = stage_verify(bundle, catalog, fields, scr)
        write_json(out / "verify_report.json", report)
        clean = (not report["monotonicity_violations"]
                 and report["strict_pass_fraction"] >= 0.99)
        print(f"monotonicity violations: {len(report['monotonicity_violations'])}  "
              f"strict pass fraction: {report['strict_pass_fraction']:.4f}")
        return 0 if clean else 3

    raise ConfigError(f"unhandled command {args.command}")


def _scr_from_cache(cache: dict, epsilon: float, bundle: RunBundle):
    from .chaingraph import ScrResult
    for r in cache["results"]:
        if abs(r["epsilon"] - epsilon) < 1e-12:
            cost = np.array([np.inf if c is None else c for c in r["min_return_cost"]])
            return ScrResult(
                epsilon=epsilon, min_return_cost=cost,
                members=np.asarray(r["members"], dtype=np.int64),
                band=np.asarray(r["warning_band"], dtype=np.int64),
                resolution=r["resolution"],
                cost_limit=np.inf if r["cost_limit"] is None else r["cost_limit"])
    raise MissingCache(f"scr.json entry for epsilon {epsilon}", "scr")


if __name__ == "__main__":
    sys.exit(main())
