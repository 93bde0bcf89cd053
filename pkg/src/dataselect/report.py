"""Per-dataset analysis, report assembly and rendering (text / CSV / JSON)."""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .behavior import PolicyConfig, action_stochasticity_profile, eas, save_policy, train_behavior_policy
from .coverage import coverage_ratio
from .data import Dataset, load_dataset, normalize_actions
from .ranking import (
    RANK_CONVENTION,
    IndicatorRecord,
    RankTable,
    RankingError,
    build_rank_table,
    meta_return,
    rank_indicators,
    tri,
)
from .returns import return_stats

log = logging.getLogger(__name__)

CONVENTIONS = {
    "ranks": RANK_CONVENTION,
    "coi": "rank of 2*eri_rank + eas_rank; score ties -> higher EAS rank, then name",
    "eas_space": "pre-tanh standard deviation in normalized action space [-1, 1]",
    "half_split": "top half holds ceil(n/2) datasets",
    "subset_spearman": "subsets are re-ranked to 0..m-1 before correlating",
    "coverage": "diagnostic only, reported as uncorrelated with performance; not used in COI",
}


@dataclass
class AnalysisConfig:
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    discount: float | None = None
    return_floor: float | None = None
    coverage: bool = True
    save_policies: str | None = None

    def echo(self) -> dict[str, Any]:
        return {
            "policy": asdict(self.policy),
            "discount_override": self.discount,
            "return_floor_override": self.return_floor,
            "coverage": self.coverage,
        }


def analyze_dataset(d: Dataset, config: AnalysisConfig | None = None) -> dict[str, Any]:
    """Compute ERI, EAS and the coverage diagnostic for one dataset."""
    config = config or AnalysisConfig()
    warnings: list[str] = []
    discount = d.meta.discount if config.discount is None else config.discount
    stats = return_stats(d, floor=config.return_floor, discount=discount)
    warnings.extend(stats.warnings)

    norm = normalize_actions(d)
    if norm.used_observed_ranges:
        warnings.append("no declared action ranges; normalized with observed extremes")
    if norm.degenerate_dims:
        warnings.append(f"degenerate action dimensions mapped to 0: {list(norm.degenerate_dims)}")
    if norm.clipped_count:
        warnings.append(f"{norm.clipped_count} action values clipped to the open interval (-1, 1)")

    policy, train = train_behavior_policy(d, config.policy, norm.values)
    profile = action_stochasticity_profile(policy, d)
    eas_value = eas(profile)
    if config.save_policies:
        out = Path(config.save_policies)
        out.mkdir(parents=True, exist_ok=True)
        save_policy(policy, out / f"{d.name}.policy.json")

    cov = coverage_ratio(d) if config.coverage else None
    if config.coverage and cov is None:
        warnings.append("no declared state ranges; coverage diagnostic unavailable")
    if cov is not None and cov.out_of_range_dims:
        warnings.append(f"states outside declared range in dimensions {list(cov.out_of_range_dims)}")

    return {
        "name": d.name,
        "n_transitions": d.n_transitions,
        "n_trajectories": d.n_trajectories,
        "state_dim": d.state_dim,
        "action_dim": d.action_dim,
        "eri": stats.eri,
        "eas": eas_value,
        "coverage": None if cov is None else cov.ratio,
        "returns": {
            "discount": discount,
            "return_floor": stats.return_floor,
            "floor_source": stats.floor_source,
            "mean_raw": float(stats.returns.mean()),
            "max_raw": float(stats.returns.max()),
            "min_raw": stats.min_raw,
            "mean_norm": stats.mean_norm,
            "max_norm": stats.max_norm,
        },
        "stochasticity": {
            "reduction": config.policy.sigma_reduction,
            "profile_min": float(profile.min()),
            "profile_max": float(profile.max()),
            "profile_std": float(profile.std()),
        },
        "training": {
            "final_nll": train.final_nll,
            "epoch_nll": train.epoch_nll,
            "epochs_run": train.epochs_run,
            "n_steps": train.n_steps,
            "seed": train.seed,
        },
        "actions": {
            "used_observed_ranges": norm.used_observed_ranges,
            "degenerate_dims": list(norm.degenerate_dims),
            "clipped_count": norm.clipped_count,
        },
        "coverage_detail": None
        if cov is None
        else {
            "log_observed_volume": cov.log_observed_volume,
            "log_full_volume": cov.log_full_volume,
            "excluded_dims": list(cov.excluded_dims),
        },
        "costs": {"deploy_cost": d.meta.deploy_cost, "fixed_cost": d.meta.fixed_cost},
        "warnings": warnings,
    }


def _analyze_path(path: str, config: AnalysisConfig) -> dict[str, Any]:
    try:
        d = load_dataset(path)
        entry = analyze_dataset(d, config)
        entry["path"] = str(path)
        return entry
    except Exception as exc:  # one bad dataset must not abort the batch
        log.debug("analysis of %s failed", path, exc_info=True)
        return {"path": str(path), "error": f"{type(exc).__name__}: {exc}"}


@dataclass
class AnalysisReport:
    datasets: list[dict[str, Any]]
    errors: list[dict[str, Any]]
    config: dict[str, Any]
    generated_at: str
    conventions: dict[str, str] = field(default_factory=lambda: dict(CONVENTIONS))
    version: str = __version__

    @property
    def status(self) -> str:
        if not self.datasets:
            return "failed"
        return "partial" if self.errors else "ok"

    def records(self) -> list[IndicatorRecord]:
        return [record_from_entry(e) for e in self.datasets]

    def to_dict(self) -> dict[str, Any]:
        return {
            "tool": "dataselect",
            "version": self.version,
            "generated_at": self.generated_at,
            "status": self.status,
            "config": self.config,
            "conventions": self.conventions,
            "datasets": self.datasets,
            "errors": self.errors,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> AnalysisReport:
        return cls(
            datasets=list(raw.get("datasets", [])),
            errors=list(raw.get("errors", [])),
            config=dict(raw.get("config", {})),
            generated_at=str(raw.get("generated_at", "")),
            conventions=dict(raw.get("conventions", CONVENTIONS)),
            version=str(raw.get("version", __version__)),
        )

    @classmethod
    def load(cls, path: str | Path) -> AnalysisReport:
        return cls.from_dict(json.loads(Path(path).read_text()))


def timestamp(pinned: str | None = None) -> str:
    return pinned if pinned is not None else datetime.now(timezone.utc).isoformat(timespec="seconds")


def analyze_paths(
    paths: Sequence[str | Path],
    config: AnalysisConfig | None = None,
    jobs: int = 1,
    pinned_timestamp: str | None = None,
) -> AnalysisReport:
    """Analyze every dataset; results keep input order, failures are collected."""
    if not paths:
        raise ValueError("no dataset paths given")
    config = config or AnalysisConfig()
    paths = [str(p) for p in paths]
    if jobs > 1 and len(paths) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_analyze_path, paths, [config] * len(paths)))
    else:
        results = [_analyze_path(p, config) for p in paths]
    return AnalysisReport(
        datasets=[r for r in results if "error" not in r],
        errors=[r for r in results if "error" in r],
        config=config.echo(),
        generated_at=timestamp(pinned_timestamp),
    )


def record_from_entry(entry: dict[str, Any]) -> IndicatorRecord:
    returns = entry.get("returns", {})
    costs = entry.get("costs", {})
    return IndicatorRecord(
        name=entry["name"],
        eri=float(entry["eri"]),
        eas=float(entry["eas"]),
        coverage=entry.get("coverage"),
        mean_norm_return=returns.get("mean_norm"),
        return_floor=returns.get("return_floor"),
        deploy_cost=float(costs.get("deploy_cost", 0.0)),
        fixed_cost=float(costs.get("fixed_cost", 0.0)),
        discount=float(returns.get("discount", 1.0)),
    )


# --------------------------------------------------------------------------
# ground truth and fixtures


def load_ground_truth(path: str | Path) -> dict[str, float]:
    """CSV with columns ``name,r_algo`` (raw, un-normalized algorithm returns)."""
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"name", "r_algo"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: ground-truth CSV needs columns name,r_algo")
        return {row["name"].strip(): float(row["r_algo"]) for row in reader}


def attach_ground_truth(records: list[IndicatorRecord], truth: dict[str, float]) -> list[IndicatorRecord]:
    """Fill ``r_algo`` and TRI; the algorithm return is shifted by each dataset's floor."""
    names = {r.name for r in records}
    missing = sorted(names - truth.keys())
    extra = sorted(truth.keys() - names)
    if missing or extra:
        parts = []
        if missing:
            parts.append(f"no ground truth for: {', '.join(missing)}")
        if extra:
            parts.append(f"ground truth for unknown datasets: {', '.join(extra)}")
        raise RankingError("ground-truth names do not match report; " + "; ".join(parts))
    out = []
    for r in records:
        if r.mean_norm_return is None or r.return_floor is None:
            raise RankingError(f"{r.name}: report lacks normalized returns needed for TRI")
        r_algo = truth[r.name]
        out.append(replace(r, r_algo=r_algo, tri=tri(r_algo - r.return_floor, r.mean_norm_return)))
    return out


@dataclass
class RankFixtures:
    names: list[str]
    eri_rank: np.ndarray
    eas_rank: np.ndarray
    tri_rank: np.ndarray | None


def load_rank_fixtures(path: str | Path) -> RankFixtures:
    """CSV ``name,eri_rank,eas_rank[,tri_rank]`` of precomputed rank columns."""
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        fields = set(reader.fieldnames or [])
        if not {"name", "eri_rank", "eas_rank"} <= fields:
            raise ValueError(f"{path}: fixtures CSV needs columns name,eri_rank,eas_rank[,tri_rank]")
        rows = list(reader)
    has_tri = "tri_rank" in fields and all(r.get("tri_rank", "").strip() for r in rows)
    return RankFixtures(
        names=[r["name"].strip() for r in rows],
        eri_rank=np.array([int(r["eri_rank"]) for r in rows]),
        eas_rank=np.array([int(r["eas_rank"]) for r in rows]),
        tri_rank=np.array([int(r["tri_rank"]) for r in rows]) if has_tri else None,
    )


def benchmark_fixture_path(which: str) -> Path:
    """Bundled published rank columns: ``"ib"`` (16 industrial-benchmark sets) or ``"mujoco"`` (12)."""
    if which not in ("ib", "mujoco"):
        raise ValueError("which must be 'ib' or 'mujoco'")
    return Path(str(resources.files("dataselect") / "resources" / f"benchmark_ranks_{which}.csv"))


def prefix_subsets(names: Sequence[str], exclude_prefixes: Sequence[str]) -> dict[str, list[bool]]:
    return {
        f"w/o {p}*": [not n.startswith(p) for n in names] for p in exclude_prefixes
    }


def table_from_fixtures(fx: RankFixtures, exclude_prefixes: Sequence[str] = ()) -> RankTable:
    subsets = prefix_subsets(fx.names, exclude_prefixes) if fx.tri_rank is not None else None
    return build_rank_table(fx.names, fx.eri_rank, fx.eas_rank, fx.tri_rank, subsets=subsets)


def table_from_report(
    report: AnalysisReport,
    ground_truth: dict[str, float] | None = None,
    exclude_prefixes: Sequence[str] = (),
) -> tuple[RankTable, list[IndicatorRecord]]:
    records = report.records()
    if len(records) < 2:
        raise RankingError("ranking requires >= 2 datasets")
    if ground_truth is not None:
        records = attach_ground_truth(records, ground_truth)
    subsets = prefix_subsets([r.name for r in records], exclude_prefixes) if ground_truth else None
    return rank_indicators(records, subsets=subsets), records


# --------------------------------------------------------------------------
# rendering


def rank_table_dict(table: RankTable) -> dict[str, Any]:
    rows = []
    for i, name in enumerate(table.names):
        rows.append(
            {
                "name": name,
                "eri_rank": int(table.eri_rank[i]),
                "eas_rank": int(table.eas_rank[i]),
                "coi_score": int(table.coi_score[i]),
                "coi_rank": int(table.coi_rank[i]),
                "tri_rank": None if table.tri_rank is None else int(table.tri_rank[i]),
                "half_correct": None if table.half is None else bool(table.half.correct[i]),
            }
        )
    spearman = {}
    if table.rho is not None:
        spearman["all"] = table.rho
    spearman.update(table.subset_rho)
    return {
        "convention": RANK_CONVENTION,
        "rows": rows,
        "spearman_rho_to_tri": spearman,
        "half_split": None
        if table.half is None
        else {"hits": table.half.hits, "n": table.n, "fraction": table.half.fraction, "top_size": table.half.top_size},
        "warnings": table.warnings,
    }


CSV_COLUMNS = ["kind", "name", "eri", "eas", "coi", "coi_score", "tri", "half_correct"]


def render_rank_table(table: RankTable, fmt: str = "text") -> str:
    """Render as ``text`` (aligned, TRI-sorted when available), ``csv`` or ``json``.

    In CSV, ``kind=dataset`` rows carry ranks and ``kind=spearman`` rows carry
    the correlation of each indicator's ranks with TRI.
    """
    data = rank_table_dict(table)
    if fmt == "json":
        return json.dumps(data, indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in data["rows"]:
            writer.writerow(
                ["dataset", row["name"], row["eri_rank"], row["eas_rank"], row["coi_rank"], row["coi_score"],
                 "" if row["tri_rank"] is None else row["tri_rank"],
                 "" if row["half_correct"] is None else int(row["half_correct"])]
            )
        for label, rho in data["spearman_rho_to_tri"].items():
            writer.writerow(["spearman", label, repr(rho["eri"]), repr(rho["eas"]), repr(rho["coi"]), "", "", ""])
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")
    return _render_text(table)


def _render_text(table: RankTable) -> str:
    order = list(range(table.n))
    if table.tri_rank is not None:
        order.sort(key=lambda i: -table.tri_rank[i])
    else:
        order.sort(key=lambda i: -table.coi_rank[i])
    labels = ["Spearman rho to TRI"] + [f"rho {label}" for label in table.subset_rho] if table.rho else []
    width = max(len("Dataset"), *(len(n) for n in table.names), *(len(lbl) for lbl in labels))
    head = f"{'Dataset':<{width}}  {'ERI':>4} {'EAS':>4} {'COI':>4}"
    if table.tri_rank is not None:
        head += f" {'TRI':>4}  half"
    lines = [f"ranks: {RANK_CONVENTION}", head, "-" * len(head)]
    split_after = table.half.top_size if table.half is not None else None
    for pos, i in enumerate(order):
        line = f"{table.names[i]:<{width}}  {table.eri_rank[i]:>4d} {table.eas_rank[i]:>4d} {table.coi_rank[i]:>4d}"
        if table.tri_rank is not None:
            line += f" {table.tri_rank[i]:>4d}  {'ok' if table.half.correct[i] else 'MISS'}"
        lines.append(line)
        if split_after is not None and pos + 1 == split_after:
            lines.append("- " * (len(head) // 2))
    if table.rho is not None:
        lines.append("-" * len(head))
        rows = [("Spearman rho to TRI", table.rho)] + [
            (f"rho {label}", rho) for label, rho in table.subset_rho.items()
        ]
        for label, rho in rows:
            lines.append(f"{label:<{width}}  {rho['eri']:>4.2f} {rho['eas']:>4.2f} {rho['coi']:>4.2f}")
        lines.append(f"half split: {table.half.hits}/{table.n} datasets in the correct half")
    for w in table.warnings:
        lines.append(f"warning: {w}")
    return "\n".join(lines) + "\n"


@dataclass
class Selection:
    names: list[str]
    coi_rank: list[int]
    meta_return: list[float | None]
    assumption: str | None


def select_datasets(
    table: RankTable,
    k: int | None = None,
    records: Sequence[IndicatorRecord] | None = None,
    horizon: int | None = None,
    delta_r: float | str | None = None,
    fixed_cost: float | None = None,
    discount: float | None = None,
) -> Selection:
    """Top-k datasets by COI, optionally annotated with the expected meta return.

    With a cost model (``horizon`` and ``delta_r``) and no ``k``, every
    dataset whose meta return is non-negative is selected, best COI first.
    ``delta_r`` is either a constant or ``"eri"`` to use each dataset's ERI
    as an optimistic improvement estimate.
    """
    order = table.order_by_coi()
    by_name = {r.name: r for r in records} if records else {}
    payoff: list[float | None] = []
    assumption = None
    if horizon is not None and delta_r is not None:
        assumption = f"delta_r={delta_r}, horizon={horizon}"
        for i in range(table.n):
            rec = by_name.get(table.names[i])
            if delta_r == "eri":
                if rec is None:
                    raise ValueError("delta_r='eri' needs indicator records")
                dr = rec.eri
            else:
                dr = float(delta_r)
            deploy = rec.deploy_cost if rec else 0.0
            fixed = fixed_cost if fixed_cost is not None else (rec.fixed_cost if rec else 0.0)
            gamma = discount if discount is not None else (rec.discount if rec else 1.0)
            payoff.append(meta_return(dr, deploy, fixed, horizon, gamma))
    if k is not None:
        if not 1 <= k <= table.n:
            raise RankingError(f"cannot select k={k} of {table.n} datasets")
        chosen = order[:k]
    elif payoff:
        chosen = [i for i in order if payoff[i] >= 0]
    else:
        raise ValueError("give k or a cost model (horizon and delta_r)")
    return Selection(
        names=[table.names[i] for i in chosen],
        coi_rank=[int(table.coi_rank[i]) for i in chosen],
        meta_return=[payoff[i] for i in chosen] if payoff else [None] * len(chosen),
        assumption=assumption,
    )


def render_selection(sel: Selection, fmt: str = "text") -> str:
    rows = [
        {"position": p, "name": n, "coi_rank": c, "meta_return": m}
        for p, (n, c, m) in enumerate(zip(sel.names, sel.coi_rank, sel.meta_return), start=1)
    ]
    if fmt == "json":
        return json.dumps({"selected": rows, "assumption": sel.assumption}, indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["position", "name", "coi_rank", "meta_return"])
        for r in rows:
            writer.writerow([r["position"], r["name"], r["coi_rank"], "" if r["meta_return"] is None else repr(r["meta_return"])])
        return buf.getvalue()
    lines = [f"{r['position']:>3}. {r['name']}  (COI rank {r['coi_rank']})"
             + ("" if r["meta_return"] is None else f"  meta return {r['meta_return']:.4g}") for r in rows]
    if sel.assumption:
        lines.append(f"payoff assumption: {sel.assumption}")
    return "\n".join(lines) + "\n"


def render_analysis(report: AnalysisReport, fmt: str = "text") -> str:
    if fmt == "json":
        return report.to_json()
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["name", "eri", "eas", "coverage", "mean_norm_return", "return_floor", "n_transitions", "n_trajectories"])
        for e in report.datasets:
            writer.writerow([e["name"], repr(e["eri"]), repr(e["eas"]), "" if e["coverage"] is None else repr(e["coverage"]),
                             repr(e["returns"]["mean_norm"]), repr(e["returns"]["return_floor"]), e["n_transitions"], e["n_trajectories"]])
        return buf.getvalue()
    width = max([len("Dataset")] + [len(e["name"]) for e in report.datasets])
    lines = [f"{'Dataset':<{width}}  {'ERI':>9} {'EAS':>9}   {'trajectories':>12}"]
    for e in report.datasets:
        lines.append(f"{e['name']:<{width}}  {e['eri']:>9.4f} {e['eas']:>9.4f}   {e['n_trajectories']:>12d}")
    cov = [e for e in report.datasets if e["coverage"] is not None]
    if cov:
        lines.append("")
        lines.append("diagnostics (reported as uncorrelated with performance): state hypercube coverage")
        for e in cov:
            lines.append(f"  {e['name']:<{width}}  {e['coverage']:.4g}")
    for e in report.datasets:
        for w in e["warnings"]:
            lines.append(f"warning [{e['name']}]: {w}")
    for err in report.errors:
        lines.append(f"error [{err['path']}]: {err['error']}")
    return "\n".join(lines) + "\n"
