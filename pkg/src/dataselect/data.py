"""Offline RL datasets: container types, file formats, validation and segmentation.

Two on-disk formats are supported:

* ``portable``: a JSON manifest plus one little-endian float32 blob laid out as
  contiguous row-major blocks ``[states][actions][rewards][next_states]``.
* ``csv``: one row per transition with header
  ``s0..s{ds-1},a0..a{da-1},r,ns0..ns{ds-1},episode_start`` and a sidecar
  ``<stem>.meta.json`` holding the metadata.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

ACTION_EPS = 1e-6
STORAGE_DTYPE = np.dtype("<f4")
FORMATS = ("portable", "csv")


class DatasetError(ValueError):
    """Raised when a dataset file or in-memory dataset violates the format contract.

    ``location`` names the offending field and, where known, the row.
    """

    def __init__(self, message: str, location: str | None = None):
        self.location = location
        super().__init__(f"{message} (at {location})" if location else message)


@dataclass(frozen=True)
class DatasetMeta:
    state_min: np.ndarray | None = None
    state_max: np.ndarray | None = None
    action_min: np.ndarray | None = None
    action_max: np.ndarray | None = None
    return_floor: float | None = None
    deploy_cost: float = 0.0
    fixed_cost: float = 0.0
    discount: float = 1.0

    def __post_init__(self) -> None:
        for lo_name, hi_name in (("state_min", "state_max"), ("action_min", "action_max")):
            lo, hi = getattr(self, lo_name), getattr(self, hi_name)
            if (lo is None) != (hi is None):
                raise DatasetError(f"{lo_name} and {hi_name} must be given together", lo_name)
            if lo is None:
                continue
            lo = np.asarray(lo, dtype=np.float64).reshape(-1)
            hi = np.asarray(hi, dtype=np.float64).reshape(-1)
            if lo.shape != hi.shape:
                raise DatasetError(f"{lo_name}/{hi_name} length mismatch", lo_name)
            if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
                raise DatasetError("non-finite value in declared range", lo_name)
            bad = np.flatnonzero(lo > hi)
            if bad.size:
                raise DatasetError(f"declared minimum above maximum in dimension {bad[0]}", lo_name)
            object.__setattr__(self, lo_name, lo)
            object.__setattr__(self, hi_name, hi)
        if self.return_floor is not None and not math.isfinite(self.return_floor):
            raise DatasetError("non-finite value", "return_floor")
        for name in ("deploy_cost", "fixed_cost"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise DatasetError(f"{name} must be finite and >= 0", name)
        if not (0.0 < self.discount <= 1.0):
            raise DatasetError("discount must lie in (0, 1]", "discount")

    @property
    def has_state_ranges(self) -> bool:
        return self.state_min is not None

    @property
    def has_action_ranges(self) -> bool:
        return self.action_min is not None

    def to_dict(self) -> dict[str, Any]:
        def vec(x):
            return None if x is None else [float(v) for v in x]

        return {
            "state_min": vec(self.state_min),
            "state_max": vec(self.state_max),
            "action_min": vec(self.action_min),
            "action_max": vec(self.action_max),
            "return_floor": self.return_floor,
            "deploy_cost": self.deploy_cost,
            "fixed_cost": self.fixed_cost,
            "discount": self.discount,
        }

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> DatasetMeta:
        kwargs: dict[str, Any] = {}
        for key in ("state_min", "state_max", "action_min", "action_max"):
            if raw.get(key) is not None:
                kwargs[key] = np.asarray(raw[key], dtype=np.float64)
        if raw.get("return_floor") is not None:
            kwargs["return_floor"] = float(raw["return_floor"])
        for key in ("deploy_cost", "fixed_cost", "discount"):
            if raw.get(key) is not None:
                kwargs[key] = float(raw[key])
        return cls(**kwargs)


@dataclass(frozen=True)
class Dataset:
    """Flat transition arrays plus trajectory boundaries.

    Arrays are stored as float32 and made read-only on construction; all
    invariants are checked in ``__post_init__`` so an existing instance is
    always valid.
    """

    name: str
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    episode_starts: np.ndarray
    meta: DatasetMeta = field(default_factory=DatasetMeta)

    def __post_init__(self) -> None:
        arrays = {}
        for key, ndim in (("states", 2), ("actions", 2), ("rewards", 1), ("next_states", 2)):
            arr = np.array(getattr(self, key), dtype=STORAGE_DTYPE)
            if arr.ndim != ndim:
                raise DatasetError(f"expected a {ndim}-d array, got shape {arr.shape}", key)
            arrays[key] = arr
        n = arrays["states"].shape[0]
        if n < 1:
            raise DatasetError("dataset has no transitions", "states")
        for key, arr in arrays.items():
            if arr.shape[0] != n:
                raise DatasetError(
                    f"dimension mismatch: {arr.shape[0]} rows, expected {n}", key
                )
            bad = np.argwhere(~np.isfinite(arr))
            if bad.size:
                raise DatasetError("non-finite value", f"{key} row {bad[0][0]}")
        if arrays["states"].shape[1] < 1 or arrays["actions"].shape[1] < 1:
            raise DatasetError("state_dim and action_dim must be >= 1", "states/actions")
        if arrays["next_states"].shape[1] != arrays["states"].shape[1]:
            raise DatasetError("dimension mismatch between states and next_states", "next_states")

        starts = np.asarray(self.episode_starts)
        if starts.ndim != 1 or starts.size == 0:
            raise DatasetError("episode_starts must be a non-empty list", "episode_starts")
        if not np.all(np.equal(np.mod(starts, 1), 0)):
            raise DatasetError("episode_starts must be integers", "episode_starts")
        starts = starts.astype(np.int64)
        if starts[0] != 0:
            raise DatasetError("episode_starts[0] must be 0", "episode_starts[0]")
        steps = np.diff(starts)
        if np.any(steps <= 0):
            i = int(np.flatnonzero(steps <= 0)[0]) + 1
            raise DatasetError("episode_starts not strictly increasing", f"episode_starts[{i}]")
        if starts[-1] >= n:
            raise DatasetError(
                f"episode start {starts[-1]} beyond last transition", "episode_starts"
            )

        meta = self.meta
        if meta.has_state_ranges and meta.state_min.size != arrays["states"].shape[1]:
            raise DatasetError("state range length does not match state_dim", "state_min")
        if meta.has_action_ranges and meta.action_min.size != arrays["actions"].shape[1]:
            raise DatasetError("action range length does not match action_dim", "action_min")

        for key, arr in arrays.items():
            arr.setflags(write=False)
            object.__setattr__(self, key, arr)
        starts.setflags(write=False)
        object.__setattr__(self, "episode_starts", starts)

    @property
    def n_transitions(self) -> int:
        return self.states.shape[0]

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    @property
    def action_dim(self) -> int:
        return self.actions.shape[1]

    @property
    def n_trajectories(self) -> int:
        return self.episode_starts.size


def segment_trajectories(d: Dataset) -> list[tuple[int, int]]:
    """Half-open ``(start, end)`` row ranges, one per trajectory, in order."""
    ends = np.append(d.episode_starts[1:], d.n_transitions)
    return [(int(s), int(e)) for s, e in zip(d.episode_starts, ends)]


@dataclass(frozen=True)
class NormalizedActions:
    values: np.ndarray
    degenerate_dims: tuple[int, ...]
    used_observed_ranges: bool
    clipped_count: int


def normalize_actions(d: Dataset, eps: float = ACTION_EPS) -> NormalizedActions:
    """Affinely map each action dimension onto [-1, 1] and clip to (-1+eps, 1-eps).

    Declared ranges are used when present, otherwise observed per-dimension
    extremes. A zero-width dimension maps to constant 0 and is reported.
    """
    acts = d.actions.astype(np.float64)
    if d.meta.has_action_ranges:
        lo, hi, observed = d.meta.action_min, d.meta.action_max, False
    else:
        lo, hi, observed = acts.min(axis=0), acts.max(axis=0), True
    width = hi - lo
    degenerate = width <= 0
    safe_width = np.where(degenerate, 1.0, width)
    out = 2.0 * (acts - lo) / safe_width - 1.0
    out[:, degenerate] = 0.0
    limit = 1.0 - eps
    clipped = int(np.count_nonzero(np.abs(out) > limit))
    out = np.clip(out, -limit, limit)
    return NormalizedActions(
        values=out,
        degenerate_dims=tuple(int(i) for i in np.flatnonzero(degenerate)),
        used_observed_ranges=observed,
        clipped_count=clipped,
    )


# --------------------------------------------------------------------------
# file formats


def _meta_sidecar(path: Path) -> Path:
    return path.with_name(path.stem + ".meta.json")


def load_dataset(path: str | Path, format: str | None = None) -> Dataset:
    """Load and validate a dataset.

    ``format`` is ``"portable"`` (path to the JSON manifest) or ``"csv"``;
    when omitted it is inferred from the file suffix.
    """
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "portable"
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")
    if not path.is_file():
        raise FileNotFoundError(path)
    if format == "csv":
        return _load_csv(path)
    return _load_portable(path)


def save_dataset(d: Dataset, path: str | Path, format: str | None = None) -> Path:
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "portable"
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")
    path.parent.mkdir(parents=True, exist_ok=True)
    if format == "csv":
        _save_csv(d, path)
    elif format == "portable":
        _save_portable(d, path)
    return path


def _save_portable(d: Dataset, manifest_path: Path) -> None:
    data_path = manifest_path.with_suffix(".bin")
    manifest = {
        "name": d.name,
        "n_transitions": d.n_transitions,
        "state_dim": d.state_dim,
        "action_dim": d.action_dim,
        "episode_starts": [int(s) for s in d.episode_starts],
        **d.meta.to_dict(),
        "data_file": data_path.name,
    }
    blob = b"".join(
        np.ascontiguousarray(a, dtype=STORAGE_DTYPE).tobytes()
        for a in (d.states, d.actions, d.rewards, d.next_states)
    )
    data_path.write_bytes(blob)
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")


def _require(manifest: dict, key: str, kind: type) -> Any:
    if key not in manifest:
        raise DatasetError("malformed header: missing field", key)
    value = manifest[key]
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise DatasetError("malformed header: expected an integer", key)
    if kind is str and not isinstance(value, str):
        raise DatasetError("malformed header: expected a string", key)
    return value


def _load_portable(manifest_path: Path) -> Dataset:
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"malformed header: {exc.msg}", f"line {exc.lineno}") from exc
    if not isinstance(manifest, dict):
        raise DatasetError("malformed header: manifest must be a JSON object", str(manifest_path))
    n = _require(manifest, "n_transitions", int)
    ds = _require(manifest, "state_dim", int)
    da = _require(manifest, "action_dim", int)
    name = _require(manifest, "name", str)
    data_file = _require(manifest, "data_file", str)
    starts = _require(manifest, "episode_starts", list)
    if n < 1 or ds < 1 or da < 1:
        raise DatasetError("malformed header: counts must be >= 1", "n_transitions/state_dim/action_dim")

    raw = np.fromfile(manifest_path.parent / data_file, dtype=STORAGE_DTYPE)
    row_width = 2 * ds + da + 1
    if raw.size != n * row_width:
        # infer which declared dimension disagrees with the payload when possible
        detail = f"payload has {raw.size} values, manifest implies {n * row_width}"
        if raw.size % n == 0:
            width = raw.size // n
            detail += f" ({width} values per transition, expected {row_width})"
        raise DatasetError(f"dimension mismatch: {detail}", data_file)

    sizes = [n * ds, n * da, n, n * ds]
    offsets = np.cumsum([0] + sizes)
    states, actions, rewards, next_states = (
        raw[offsets[i] : offsets[i + 1]] for i in range(4)
    )
    return Dataset(
        name=name,
        states=states.reshape(n, ds),
        actions=actions.reshape(n, da),
        rewards=rewards,
        next_states=next_states.reshape(n, ds),
        episode_starts=np.asarray(starts),
        meta=DatasetMeta.from_dict(manifest),
    )


def _csv_header(ds: int, da: int) -> list[str]:
    return (
        [f"s{i}" for i in range(ds)]
        + [f"a{i}" for i in range(da)]
        + ["r"]
        + [f"ns{i}" for i in range(ds)]
        + ["episode_start"]
    )


def _save_csv(d: Dataset, path: Path) -> None:
    starts = np.zeros(d.n_transitions, dtype=np.int64)
    starts[d.episode_starts] = 1
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_csv_header(d.state_dim, d.action_dim))
        for i in range(d.n_transitions):
            row = [repr(float(v)) for v in d.states[i]]
            row += [repr(float(v)) for v in d.actions[i]]
            row.append(repr(float(d.rewards[i])))
            row += [repr(float(v)) for v in d.next_states[i]]
            row.append(str(starts[i]))
            writer.writerow(row)
    sidecar = {"name": d.name, **d.meta.to_dict()}
    _meta_sidecar(path).write_text(json.dumps(sidecar, indent=2) + "\n")


def _parse_csv_header(header: list[str]) -> tuple[int, int]:
    header = [h.strip() for h in header]
    if not header or header[-1] != "episode_start" or "r" not in header:
        raise DatasetError("malformed header: expected ...,r,...,episode_start", "row 1")
    r_at = header.index("r")
    ds = sum(1 for h in header[:r_at] if h.startswith("s"))
    da = r_at - ds
    if ds < 1 or da < 1 or header != _csv_header(ds, da):
        raise DatasetError("malformed header: columns out of order or misnamed", "row 1")
    return ds, da


def _load_csv(path: Path) -> Dataset:
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetError("malformed header: empty file", "row 1")
    ds, da = _parse_csv_header(rows[0])
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    width = len(header)
    values = np.empty((len(body), width - 1), dtype=np.float64)
    flags = np.empty(len(body), dtype=np.int64)
    for i, row in enumerate(body):
        line = i + 2
        if len(row) != width:
            raise DatasetError(
                f"dimension mismatch: {len(row)} fields, expected {width}", f"row {line}"
            )
        for j, cell in enumerate(row[:-1]):
            try:
                v = float(cell)
            except ValueError:
                raise DatasetError(f"unparseable number {cell!r}", f"row {line}, column {header[j]}")
            if not math.isfinite(v):
                raise DatasetError("non-finite value", f"row {line}, column {header[j]}")
            values[i, j] = v
        if row[-1].strip() not in ("0", "1"):
            raise DatasetError("episode_start must be 0 or 1", f"row {line}, column episode_start")
        flags[i] = int(row[-1])
    if body and flags[0] != 1:
        raise DatasetError("first transition must start an episode", "row 2, column episode_start")

    sidecar = _meta_sidecar(path)
    meta_raw: dict[str, Any] = {}
    if sidecar.is_file():
        try:
            meta_raw = json.loads(sidecar.read_text())
        except json.JSONDecodeError as exc:
            raise DatasetError(f"malformed sidecar: {exc.msg}", sidecar.name) from exc
    return Dataset(
        name=str(meta_raw.get("name", path.stem)),
        states=values[:, :ds],
        actions=values[:, ds : ds + da],
        rewards=values[:, ds + da],
        next_states=values[:, ds + da + 1 :],
        episode_starts=np.flatnonzero(flags),
        meta=DatasetMeta.from_dict(meta_raw),
    )
