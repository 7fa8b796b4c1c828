"""Grid-search orchestration, held-out evaluation, ranking, and exports.

One "subject" is one simulated dataset (phantom seed). For every
hyperparameter combination the harness trains one network per
(slice, coil), unaliases the held-out frames, and records the mean k-space
L1 against the calibration labels. Rows are deterministic given
(config, seed): worker streams are derived from the global seed and the
task identity, never from scheduling order, and records.csv carries no
timing columns, so its bytes are identical at any worker count.

Percentile convention: within a group of N ranked records, the record
with rank r (r = 1 is the lowest mean L1, ties broken by combination
index) gets percentile 100 * (N - r + 0.5) / N.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import product

import numpy as np

from .augment import build_split_slice_set, build_standard_set
from .errors import ConfigError, DataError, GroupError, ParameterError, ShapeError
from .fft import ifft2c
from .grappa import GrappaKernel, apply_kernel
from .network import NetworkConfig, RakiNetwork, build_network, train, unalias
from .rng import Rng
from .sim import SimTimeseries

PERCENTILE_CONVENTION = (
    "percentile = 100 * (N - rank + 0.5) / N; rank 1 is the lowest mean L1, "
    "ties broken by combination index"
)

RECORDS_CSV_COLUMNS = [
    "seed",
    "combo",
    "num_layers",
    "filter_size",
    "num_filters",
    "penultimate_filters",
    "batch_norm",
    "dropout",
    "split_slice",
    "epochs",
    "mean_l1",
    "frame_l1",
    "status",
]


@dataclass(frozen=True)
class HyperCombo:
    num_layers: int
    filter_size: int
    num_filters: int
    penultimate_filters: int
    batch_norm: bool
    dropout: bool
    split_slice: bool

    @property
    def provenance(self) -> str:
        return "split-slice" if self.split_slice else "standard"


@dataclass
class GridSpec:
    """Value lists for the seven swept hyperparameters."""

    num_layers: list[int]
    filter_size: list[int]
    num_filters: list[int]
    penultimate_filters: list[int]
    batch_norm: list[bool]
    dropout: list[bool]
    split_slice: list[bool]

    @classmethod
    def default(cls) -> "GridSpec":
        return cls(
            num_layers=[1, 3, 5, 7],
            filter_size=[1, 3, 5, 7, 9, 11],
            num_filters=[32, 64, 96, 128],
            penultimate_filters=[64, 128, 256, 384, 512],
            batch_norm=[False, True],
            dropout=[False, True],
            split_slice=[False, True],
        )

    def raw_size(self) -> int:
        """Cartesian product of the value lists, before collapsing."""
        return (
            len(self.num_layers)
            * len(self.filter_size)
            * len(self.num_filters)
            * len(self.penultimate_filters)
            * len(self.batch_norm)
            * len(self.dropout)
            * len(self.split_slice)
        )

    def combinations(self) -> list[HyperCombo]:
        """Unique network configurations in nested-loop order.

        A 1-layer network has no penultimate layer, so crossings that
        differ only in that width describe the same network; they are
        emitted once, carrying the first listed penultimate value. The
        paper-default grid therefore enumerates 3072 unique combinations
        out of 3840 raw crossings.
        """
        if self.raw_size() == 0:
            raise ConfigError("grid is empty")
        combos = []
        seen = set()
        for vals in product(
            self.num_layers,
            self.filter_size,
            self.num_filters,
            self.penultimate_filters,
            self.batch_norm,
            self.dropout,
            self.split_slice,
        ):
            combo = HyperCombo(*vals)
            if combo.num_layers == 1:
                combo = HyperCombo(
                    combo.num_layers,
                    combo.filter_size,
                    combo.num_filters,
                    self.penultimate_filters[0],
                    combo.batch_norm,
                    combo.dropout,
                    combo.split_slice,
                )
                if combo in seen:
                    continue
                seen.add(combo)
            combos.append(combo)
        return combos

    def size(self) -> int:
        """Number of unique combinations enumerated."""
        return len(self.combinations())


@dataclass
class EvalRecord:
    seed: int
    combo_index: int
    combo: HyperCombo | None
    frame_l1: list[float]
    mean_l1: float
    epochs: int
    wall_seconds: float
    status: str = "ok"


@dataclass
class NormalizedRecord:
    record: EvalRecord
    normalized_loss: float
    percentile: float
    rank: int


# -- held-out evaluation -------------------------------------------------------


def held_out_indices(frame_count: int, total_frames: int) -> list[int]:
    """Equally spaced frame indices in [1, total), excluding the training
    frame 0. Spacing >= 1 guarantees distinct indices."""
    if frame_count < 1:
        raise ParameterError(f"frame_count must be >= 1, got {frame_count}")
    held = total_frames - 1
    if held < frame_count:
        raise DataError(
            f"requested {frame_count} held-out frames but only {held} available"
        )
    if frame_count == 1:
        return [1]
    span = total_frames - 2
    return [1 + (j * span) // (frame_count - 1) for j in range(frame_count)]


def _as_reconstructor(models):
    """Accept a callable, a dict of networks, or a dict of kernels."""
    if callable(models):
        return models
    if not isinstance(models, dict) or not models:
        raise ParameterError("models must be a non-empty dict or a callable")
    sample = next(iter(models.values()))
    if isinstance(sample, RakiNetwork):
        return lambda frame: unalias(models, frame, unshift=False)
    if isinstance(sample, GrappaKernel):
        n = max(s for s, _ in models) + 1
        coils = max(c for _, c in models) + 1

        def recon(frame):
            out = np.empty((n,) + frame.shape, dtype=np.complex128)
            for (s, c), kernel in models.items():
                out[s, c] = apply_kernel(kernel, frame)
            return out

        return recon
    raise ParameterError(f"unsupported model type {type(sample).__name__}")


def _frame_l1(recon, frame, calib) -> float:
    est = recon(frame)
    if est.shape != calib.shape:
        raise ShapeError(f"reconstruction {est.shape} does not match calib {calib.shape}")
    d = est - calib
    return float(np.mean(np.abs(np.stack([d.real, d.imag]))))


def evaluate(models, ts: SimTimeseries, frame_count: int = 20) -> EvalRecord:
    """Mean held-out k-space L1 of a reconstructor against calibration.

    models: dict[(slice, coil)] of RakiNetwork or GrappaKernel, or a
    callable frame -> (n, coils, H, W) in acquisition (shifted) coords.
    """
    recon = _as_reconstructor(models)
    idx = held_out_indices(frame_count, ts.frame_count)
    l1s = [_frame_l1(recon, ts.frames[i], ts.calib) for i in idx]
    return EvalRecord(
        seed=-1 if ts.seed is None else ts.seed,
        combo_index=-1,
        combo=None,
        frame_l1=l1s,
        mean_l1=float(np.mean(l1s)),
        epochs=0,
        wall_seconds=0.0,
    )


# -- error maps --------------------------------------------------------------


@dataclass
class ErrorMaps:
    percent: np.ndarray  # (n, H, W) percent error of RSS images
    kspace_l1: np.ndarray  # (n,) mean |Delta k| over real/imag per slice
    support: np.ndarray  # (n, H, W) bool, reference RSS > 5% of its max


def _rss_image(slices_ks: np.ndarray) -> np.ndarray:
    imgs = ifft2c(slices_ks)
    return np.sqrt((np.abs(imgs) ** 2).sum(axis=-3))


def error_map(recon: np.ndarray, truth: np.ndarray) -> ErrorMaps:
    """Per-slice percent-error images (RSS coil combination) plus k-space L1.

    recon/truth: (n, coils, H, W) complex in matching coordinates.
    """
    recon = np.asarray(recon, dtype=np.complex128)
    truth = np.asarray(truth, dtype=np.complex128)
    if recon.shape != truth.shape:
        raise ShapeError(f"shape mismatch {recon.shape} vs {truth.shape}")
    rss_r = _rss_image(recon)
    rss_t = _rss_image(truth)
    eps = 1e-6 * float(np.max(rss_t))
    percent = 100.0 * np.abs(rss_r - rss_t) / (rss_t + eps)
    support = rss_t > 0.05 * float(np.max(rss_t))
    d = recon - truth
    kl1 = np.mean(np.abs(np.stack([d.real, d.imag])), axis=(0, 2, 3, 4))
    return ErrorMaps(percent=percent, kspace_l1=kl1, support=support)


def write_pgm(path, arr: np.ndarray, vmax: float = 100.0):
    """8-bit binary PGM; values are clipped to [0, vmax] then scaled."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"PGM expects a 2D array, got ndim={arr.ndim}")
    scaled = np.clip(arr / vmax, 0.0, 1.0) * 255.0
    data = scaled.round().astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode())
        f.write(data.tobytes())


def write_f64(path, arr: np.ndarray):
    np.ascontiguousarray(arr).astype("<f8").tofile(path)


# -- grid execution -----------------------------------------------------------


_WORKER_TS: SimTimeseries | None = None


def _init_worker(ts: SimTimeseries):
    global _WORKER_TS
    _WORKER_TS = ts


def _effective_key(combo: HyperCombo):
    # inert hyperparameters do not change the network: a 1-layer config has
    # no penultimate layer, and 1- or 2-layer configs have no hidden
    # convolutions using num_filters
    penult = None if combo.num_layers == 1 else combo.penultimate_filters
    filters = None if combo.num_layers <= 2 else combo.num_filters
    return (
        combo.num_layers,
        combo.filter_size,
        filters,
        penult,
        combo.batch_norm,
        combo.dropout,
        combo.split_slice,
    )


def _train_task(args):
    """Train one (combination, slice, coil) network. Runs in a worker."""
    (rep_index, combo, s, c, seed, max_epochs, max_seconds, lr, batch_size) = args
    ts = _WORKER_TS
    if combo.split_slice:
        tset = build_split_slice_set(ts.calib, s, c)
    else:
        tset = build_standard_set(ts.calib, ts.frames[0], s, c)
    cfg = NetworkConfig(
        num_layers=combo.num_layers,
        filter_size=combo.filter_size,
        num_filters=combo.num_filters,
        penultimate_filters=combo.penultimate_filters,
        batch_norm=combo.batch_norm,
        dropout=combo.dropout,
        in_channels=2 * ts.coil_count,
    )
    rng = Rng.from_keys(seed, "grid-train", rep_index, s, c)
    net = build_network(cfg, rng)
    record = train(
        net,
        tset,
        max_epochs=max_epochs,
        max_seconds=max_seconds,
        lr=lr,
        batch_size=batch_size,
        rng=rng,
    )
    return (rep_index, s, c), net, record


def run_grid(
    ts: SimTimeseries,
    grid: GridSpec,
    seed: int,
    max_epochs: int | None = 200,
    max_seconds: float | None = None,
    lr: float = 1e-4,
    batch_size: int = 48,
    eval_frames: int = 20,
    workers: int = 1,
) -> list[EvalRecord]:
    """Train and evaluate every grid combination on one dataset.

    Duplicate configurations (1-layer networks that differ only in the
    inert penultimate width) are trained once and fanned out to every
    owning combination in the output. Failed trainings are recorded with
    status "failed" and the sweep continues.
    """
    if ts.frame_count < 3:
        raise DataError("dataset needs calibration plus >= 2 held-out frames")
    combos = grid.combinations()
    reps: dict[tuple, int] = {}
    members: dict[int, list[int]] = {}
    for i, combo in enumerate(combos):
        key = _effective_key(combo)
        if key not in reps:
            reps[key] = i
            members[i] = []
        members[reps[key]].append(i)

    tasks = [
        (rep, combos[rep], s, c, seed, max_epochs, max_seconds, lr, batch_size)
        for rep in members
        for s in range(ts.n)
        for c in range(ts.coil_count)
    ]

    nets: dict[int, dict[tuple[int, int], RakiNetwork]] = {rep: {} for rep in members}
    train_info: dict[int, list] = {rep: [] for rep in members}
    failed: set[int] = set()

    if workers <= 1:
        _init_worker(ts)
        results = []
        for task in tasks:
            try:
                results.append(_train_task(task))
            except Exception:
                failed.add(task[0])
    else:
        results = []
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker, initargs=(ts,)
        ) as pool:
            futures = {pool.submit(_train_task, t): t for t in tasks}
            for fut, task in futures.items():
                try:
                    results.append(fut.result())
                except Exception:
                    failed.add(task[0])

    for (rep, s, c), net, record in results:
        nets[rep][(s, c)] = net
        train_info[rep].append(record)

    records = []
    for rep, member_list in members.items():
        combo = combos[rep]
        status = "ok"
        l1s: list[float] = []
        mean_l1 = float("nan")
        epochs = 0
        wall = 0.0
        if rep in failed:
            status = "failed"
        else:
            infos = train_info[rep]
            epochs = infos[0].epochs if infos else 0
            wall = sum(r.wall_seconds for r in infos)
            if any(not np.isfinite(r.final_loss) for r in infos):
                status = "failed"
            else:
                try:
                    ev = evaluate(nets[rep], ts, eval_frames)
                    l1s = ev.frame_l1
                    mean_l1 = ev.mean_l1
                    if not np.isfinite(mean_l1):
                        status = "failed"
                except Exception:
                    status = "failed"
        if status == "failed":
            l1s = []
            mean_l1 = float("nan")
        for idx in member_list:
            records.append(
                EvalRecord(
                    seed=seed,
                    combo_index=idx,
                    combo=combos[idx],
                    frame_l1=list(l1s),
                    mean_l1=mean_l1,
                    epochs=epochs,
                    wall_seconds=wall,
                    status=status,
                )
            )
    records.sort(key=lambda r: (r.seed, r.combo_index))
    return records


# -- ranking and exports ----------------------------------------------------


def normalize_and_rank(
    records: list[EvalRecord], group_key=lambda r: r.seed
) -> list[NormalizedRecord]:
    """Within each group, normalized loss = mean L1 / group minimum, and
    percentile follows PERCENTILE_CONVENTION. Failed records carry NaN."""
    if not records:
        raise GroupError("no records to rank")
    groups: dict = {}
    for rec in records:
        groups.setdefault(group_key(rec), []).append(rec)
    out = []
    for key, group in groups.items():
        ok = [r for r in group if r.status == "ok" and np.isfinite(r.mean_l1)]
        if not ok:
            raise GroupError(f"group {key!r} has no successful records")
        best = min(r.mean_l1 for r in ok)
        ordered = sorted(ok, key=lambda r: (r.mean_l1, r.combo_index))
        rank_of = {id(r): i + 1 for i, r in enumerate(ordered)}
        n = len(ok)
        for rec in group:
            if id(rec) in rank_of:
                rank = rank_of[id(rec)]
                out.append(
                    NormalizedRecord(
                        record=rec,
                        normalized_loss=rec.mean_l1 / best,
                        percentile=100.0 * (n - rank + 0.5) / n,
                        rank=rank,
                    )
                )
            else:
                out.append(
                    NormalizedRecord(
                        record=rec,
                        normalized_loss=float("nan"),
                        percentile=float("nan"),
                        rank=0,
                    )
                )
    return out


def _csv_row(rec: EvalRecord) -> list[str]:
    c = rec.combo
    return [
        str(rec.seed),
        str(rec.combo_index),
        str(c.num_layers),
        str(c.filter_size),
        str(c.num_filters),
        str(c.penultimate_filters),
        str(int(c.batch_norm)),
        str(int(c.dropout)),
        str(int(c.split_slice)),
        str(rec.epochs),
        repr(rec.mean_l1),
        ";".join(repr(v) for v in rec.frame_l1),
        rec.status,
    ]


def write_records_csv(records: list[EvalRecord], path):
    """Fixed column order (RECORDS_CSV_COLUMNS); floats use repr so the
    file is byte-identical for identical runs."""
    lines = [",".join(RECORDS_CSV_COLUMNS)]
    for rec in records:
        lines.append(",".join(_csv_row(rec)))
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def read_records_csv(path) -> list[EvalRecord]:
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    if not lines or lines[0] != ",".join(RECORDS_CSV_COLUMNS):
        raise DataError(f"{path}: unexpected records.csv header")
    records = []
    for ln in lines[1:]:
        parts = ln.split(",")
        combo = HyperCombo(
            num_layers=int(parts[2]),
            filter_size=int(parts[3]),
            num_filters=int(parts[4]),
            penultimate_filters=int(parts[5]),
            batch_norm=bool(int(parts[6])),
            dropout=bool(int(parts[7])),
            split_slice=bool(int(parts[8])),
        )
        frame_l1 = [float(v) for v in parts[11].split(";") if v]
        records.append(
            EvalRecord(
                seed=int(parts[0]),
                combo_index=int(parts[1]),
                combo=combo,
                frame_l1=frame_l1,
                mean_l1=float(parts[10]),
                epochs=int(parts[9]),
                wall_seconds=0.0,
                status=parts[12],
            )
        )
    return records


def summarize(records: list[EvalRecord]) -> dict:
    """Per-group best configuration and normalized stats for summary.json."""
    normalized = normalize_and_rank(records)
    by_group: dict = {}
    for nrec in normalized:
        by_group.setdefault(nrec.record.seed, []).append(nrec)
    groups = {}
    for seed, nrecs in sorted(by_group.items()):
        ok = [n for n in nrecs if n.rank > 0]
        best = min(ok, key=lambda n: n.rank)
        groups[str(seed)] = {
            "count": len(nrecs),
            "ok": len(ok),
            "min_mean_l1": best.record.mean_l1,
            "best_combo": asdict(best.record.combo),
            "best_combo_index": best.record.combo_index,
            "records": [
                {
                    "combo": n.record.combo_index,
                    "mean_l1": n.record.mean_l1,
                    "normalized_loss": n.normalized_loss,
                    "percentile": n.percentile,
                    "rank": n.rank,
                    "status": n.record.status,
                }
                for n in sorted(nrecs, key=lambda n: n.record.combo_index)
            ],
        }
    return {"percentile_convention": PERCENTILE_CONVENTION, "groups": groups}


def write_summary_json(records: list[EvalRecord], path):
    with open(path, "w") as f:
        json.dump(summarize(records), f, indent=2, sort_keys=True, allow_nan=True)
        f.write("\n")
