"""Resilience-sweep driver and command line.

Commands:
  sweep run      - accuracy vs BER sweep, CSV output (one record per run plus
                   mean/std summary rows per point)
  sweep train    - three-group training trace (clean / injected / protected)
  sweep overhead - redundancy accounting table for a 256x256 array
  sweep selftest - exhaustive FP16 and ECC checks

Config files are flat `key = value` text (lists comma-separated, # comments);
command-line flags override file keys.  Every record is a pure function of
the config and master seed, so reruns produce byte-identical CSV.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache

import numpy as np

from . import bench, ecc, fp16, tensorfile
from .bench import RunConfig, TinyMlp
from .inject import FieldMask, derive_seed

EXIT_BAD_CONFIG = 2
EXIT_BAD_OUTPUT = 3


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclasses.dataclass
class SweepConfig:
    ber_list: list = dataclasses.field(default_factory=lambda: [10.0**e for e in range(-8, -1)])
    masks: list = dataclasses.field(default_factory=lambda: [FieldMask.FULL])
    mode: str = "static"
    ecc: bool = False
    aligned: bool | None = None  # default: follow ecc
    n: int = 8
    index: int = 2
    runs_per_point: int = 100
    master_seed: int = 2024
    model: str = "builtin:small"
    dataset: str = "builtin:small"
    out: str = "sweep.csv"

    def resolved_aligned(self) -> bool:
        return self.ecc if self.aligned is None else self.aligned


@dataclasses.dataclass
class TrainConfig:
    epochs: int = 12
    ber: float = 2e-4
    mask: FieldMask = FieldMask.EXPONENT
    lr: float = 0.03
    batch: int = 64
    seeds: int = 10
    n: int = 8
    index: int = 2
    master_seed: int = 2024
    model: str = "builtin:small"
    dataset: str = "builtin:small"
    out: str = "train.csv"


def _parse_bool(v: str) -> bool:
    s = v.strip().lower()
    if s in ("on", "true", "yes", "1"):
        return True
    if s in ("off", "false", "no", "0"):
        return False
    raise ConfigError(f"expected on/off, got {v!r}")


def _parse_float_list(v: str):
    return [float(t) for t in v.split(",") if t.strip()]


def _parse_mask_list(v: str):
    return [FieldMask.parse(t) for t in v.split(",") if t.strip()]


_SWEEP_PARSERS = {
    "ber_list": _parse_float_list,
    "masks": _parse_mask_list,
    "mode": lambda v: v.strip(),
    "ecc": _parse_bool,
    "aligned": _parse_bool,
    "n": int,
    "index": int,
    "runs_per_point": int,
    "master_seed": int,
    "model": lambda v: v.strip(),
    "dataset": lambda v: v.strip(),
    "out": lambda v: v.strip(),
}

_TRAIN_PARSERS = {
    "epochs": int,
    "ber": float,
    "mask": FieldMask.parse,
    "lr": float,
    "batch": int,
    "seeds": int,
    "n": int,
    "index": int,
    "master_seed": int,
    "model": lambda v: v.strip(),
    "dataset": lambda v: v.strip(),
    "out": lambda v: v.strip(),
}


def parse_config_file(path: str, parsers: dict) -> dict:
    out = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key = value, got {raw.rstrip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in parsers:
                raise ConfigError(f"unknown config key {key!r} (line {lineno})")
            try:
                out[key] = parsers[key](value)
            except ConfigError:
                raise
            except (ValueError, TypeError) as e:
                raise ConfigError(f"bad value for {key!r}: {e}") from None
    return out


def load_sweep_config(path: str | None, overrides: dict) -> SweepConfig:
    values = parse_config_file(path, _SWEEP_PARSERS) if path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    cfg = SweepConfig(**values)
    if cfg.mode not in ("static", "dynamic"):
        raise ConfigError(f"mode must be static or dynamic, got {cfg.mode!r}")
    if cfg.ecc and not cfg.resolved_aligned():
        raise ConfigError("ecc=on requires aligned weights (aligned=on)")
    return cfg


def load_train_config(path: str | None, overrides: dict) -> TrainConfig:
    values = parse_config_file(path, _TRAIN_PARSERS) if path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig(**values)


# ---------------------------------------------------------------------------
# builtin workloads


_PRESETS = {
    # name: (dim, classes, margin, hidden, train_n, eval_n)
    "small": (32, 4, 3.5, 48, 512, 512),
    "wide": (128, 8, 3.5, 96, 1024, 192),
}


def _preset_params(name: str):
    if name not in _PRESETS:
        raise ConfigError(f"unknown builtin preset {name!r}; have {sorted(_PRESETS)}")
    return _PRESETS[name]


@lru_cache(maxsize=None)
def builtin_dataset(name: str, split: str = "eval") -> bench.Dataset:
    dim, classes, margin, _, train_n, eval_n = _preset_params(name)
    salt = sum(name.encode()) % 1000  # stable across processes, unlike hash()
    seed = {"train": 100, "eval": 101}[split] + salt
    n = train_n if split == "train" else eval_n
    return bench.gen_dataset(
        seed=seed, n_samples=n, n_classes=classes, dim=dim, margin=margin, centroid_seed=7000 + salt
    )


@lru_cache(maxsize=None)
def builtin_weights(name: str):
    dim, classes, _, hidden, _, _ = _preset_params(name)
    train = builtin_dataset(name, "train")
    return bench.train_reference(train, dims=(dim, hidden, classes), epochs=40, lr=0.1, batch=32, seed=7)


def _resolve_dataset(spec: str) -> bench.Dataset:
    if spec.startswith("builtin:"):
        return builtin_dataset(spec.split(":", 1)[1])
    tensors, _ = tensorfile.load(spec)
    x = fp16.decode_array(tensors["x"])
    y = fp16.decode_array(tensors["y"]).astype(np.int64)
    return bench.Dataset(x, y, tensors["x"])


def _resolve_model(spec: str, aligned: bool, n: int, index: int, ecc: bool = False) -> TinyMlp:
    """Model for one sweep arm.

    aligned selects exponent-aligned weight values; ecc selects the one4n
    storage layout with protected rows.  The unprotected arm (ecc=off) stores
    its weights in the standard per-weight-exponent layout, aligned or not,
    mirroring a general FP CIM macro without the co-design.
    """
    if spec.startswith("builtin:"):
        weights = [np.array(w) for w in builtin_weights(spec.split(":", 1)[1])]
    else:
        tensors, _ = tensorfile.load(spec)
        weights = [fp16.decode_array(tensors[k]) for k in sorted(tensors)]
    if not aligned:
        return bench.build_model(weights, mode="baseline")
    model = bench.build_model(weights, mode="one4n", n=n, index=index)
    if ecc:
        return model
    return TinyMlp(model.dims, "baseline", model.weight_bits)


def export_model(model: TinyMlp, path: str):
    tensors = {f"w{i + 1}": b for i, b in enumerate(model.weight_bits)}
    entries = None
    if model.tables is not None:
        entries = tensorfile.align_entries_from_tables(model.tables, model.index)
    tensorfile.save(path, tensors, entries)


# ---------------------------------------------------------------------------
# sweep execution


_COLUMNS = (
    "ber,mask,mode,ecc,n,index,run,seed,accuracy,"
    "flips_injected,corrected_singles,detected_doubles,nan_events"
)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


_WORKER_STATE: dict = {}


def _worker_init(model, ds):
    _WORKER_STATE["model"] = model
    _WORKER_STATE["ds"] = ds


def _worker_eval(args):
    rc = RunConfig(**args)
    return bench.evaluate(_WORKER_STATE["model"], _WORKER_STATE["ds"], rc)


def run_sweep(cfg: SweepConfig, workers: int = 1) -> list[str]:
    """Execute the sweep and return the CSV lines (also written to cfg.out)."""
    model = _resolve_model(cfg.model, cfg.resolved_aligned(), cfg.n, cfg.index, cfg.ecc)
    ds = _resolve_dataset(cfg.dataset)
    points = [(ber, mask) for ber in cfg.ber_list for mask in cfg.masks]
    jobs = []
    for p, (ber, mask) in enumerate(points):
        for run in range(cfg.runs_per_point):
            seed = derive_seed(cfg.master_seed, p * cfg.runs_per_point + run)
            jobs.append(
                dict(mode=cfg.mode, ber=ber, mask=mask, exposure="all", ecc=cfg.ecc, seed=seed)
            )
    if workers > 1:
        with ProcessPoolExecutor(workers, initializer=_worker_init, initargs=(model, ds)) as pool:
            results = list(pool.map(_worker_eval, jobs, chunksize=8))
    else:
        _worker_init(model, ds)
        results = [_worker_eval(j) for j in jobs]

    lines = [_COLUMNS]
    for p, (ber, mask) in enumerate(points):
        rows = results[p * cfg.runs_per_point : (p + 1) * cfg.runs_per_point]
        prefix = f"{_fmt(ber)},{mask.value},{cfg.mode},{'on' if cfg.ecc else 'off'},{cfg.n},{cfg.index}"
        for run, r in enumerate(rows):
            seed = jobs[p * cfg.runs_per_point + run]["seed"]
            lines.append(
                f"{prefix},{run},{seed},{_fmt(r.accuracy)},{r.flips},"
                f"{r.corrected_singles},{r.detected_doubles},{r.nan_events}"
            )
        cols = np.array([[r.accuracy, r.flips, r.corrected_singles, r.detected_doubles, r.nan_events] for r in rows])
        mean, std = cols.mean(axis=0), cols.std(axis=0)
        lines.append(f"{prefix},mean,," + ",".join(_fmt(v) for v in mean))
        lines.append(f"{prefix},std,," + ",".join(_fmt(v) for v in std))
    _write_lines(cfg.out, lines)
    return lines


def run_train_trace(cfg: TrainConfig) -> list[str]:
    """Training traces for three groups: clean, injected (unprotected), and
    injected with exponent alignment plus ECC.  CSV rows per (group, seed,
    epoch)."""
    w1, w2 = (np.array(w) for w in _resolve_train_weights(cfg))
    train_ds = _resolve_dataset_split(cfg.dataset, "train")
    eval_ds = _resolve_dataset_split(cfg.dataset, "eval")
    lines = ["group,seed,epoch,loss,accuracy,nan_flag"]
    groups = (
        ("clean", False, 0.0),
        ("injected", False, cfg.ber),
        ("protected", True, cfg.ber),
    )
    for g, (group, aligned, ber) in enumerate(groups):
        for s in range(cfg.seeds):
            state = bench.init_train_state(w1.copy(), w2.copy(), n=cfg.n, index=cfg.index, lr=cfg.lr, aligned=aligned)
            rc = RunConfig(
                mode="dynamic",
                ber=ber,
                mask=cfg.mask if not aligned else FieldMask.FULL,
                exposure="all",
                ecc=aligned,
                seed=derive_seed(cfg.master_seed, g, s),
            )
            state, trace = bench.finetune_aligned(
                state, train_ds, cfg.epochs, rc, batch=cfg.batch, eval_ds=eval_ds, shuffle_seed=s
            )
            for epoch, loss, acc, nan_flag in trace:
                loss_s = _fmt(loss) if np.isfinite(loss) else "nan"
                lines.append(f"{group},{s},{epoch},{loss_s},{_fmt(acc)},{nan_flag}")
    _write_lines(cfg.out, lines)
    return lines


def _resolve_train_weights(cfg: TrainConfig):
    if cfg.model.startswith("builtin:"):
        return builtin_weights(cfg.model.split(":", 1)[1])
    tensors, _ = tensorfile.load(cfg.model)
    return [fp16.decode_array(tensors[k]) for k in sorted(tensors)]


def _resolve_dataset_split(spec: str, split: str) -> bench.Dataset:
    if spec.startswith("builtin:"):
        return builtin_dataset(spec.split(":", 1)[1], split)
    return _resolve_dataset(spec)


def _write_lines(path: str, lines: list[str]):
    try:
        with open(path, "w", newline="\n") as f:
            f.write("\n".join(lines) + "\n")
    except OSError as e:
        raise _OutputError(f"cannot write {path!r}: {e}") from e


class _OutputError(OSError):
    pass


def overhead_table(n: int = 8) -> str:
    rows = [f"Array 256x256, one4n group size n={n}", f"{'scheme':22}{'redundant_bits':>16}{'exponent_sram_cells':>22}"]
    for scheme in ("traditional_full", "traditional_exp_sign", "row_based_full", "one4n"):
        rep = ecc.overhead_accounting(scheme, n=n)
        rows.append(f"{scheme:22}{rep.redundant_bits:>16}{rep.exponent_sram_cells:>22}")
    return "\n".join(rows)


# ---------------------------------------------------------------------------
# selftest


def selftest(out=sys.stdout) -> int:
    """Exhaustive FP16 and ECC suites; returns 0 when everything passes."""
    import itertools

    failures = 0

    def check(name, ok):
        nonlocal failures
        out.write(f"{'PASS' if ok else 'FAIL'}  {name}\n")
        failures += 0 if ok else 1

    ok = all(fp16.compose(*fp16.decompose(h)) == h for h in range(1 << 16))
    check("fp16 decompose/compose bijective over 65536 patterns", ok)

    rng = np.random.default_rng(2024)
    ok = True
    for _ in range(10_000):
        a = int(rng.integers(0, 2)) << 15 | int(rng.integers(1, 31)) << 10 | int(rng.integers(0, 1024))
        b = int(rng.integers(0, 2)) << 15 | int(rng.integers(1, 31)) << 10 | int(rng.integers(0, 1024))
        got = fp16.pack_product(fp16.fp_mul(a, b))
        with np.errstate(over="ignore"):
            ref = int((np.uint16(a).view(np.float16) * np.uint16(b).view(np.float16)).view(np.uint16))
        if ref & 0x7C00 == 0:
            ref &= 0x8000
        ga, ra = got & 0x7FFF, ref & 0x7FFF
        if ref & 0x7C00 == 0x7C00:
            ok &= got & 0x7C00 == 0x7C00 or ga == 0x7BFF
        elif ra == 0x0400 and ga == 0:
            pass  # truncation flushes where RNE rounds up to the first normal
        else:
            ok &= (got >> 15 == ref >> 15 or ga == ra == 0) and abs(ga - ra) <= 1
    check("fp16 multiply within 1 ulp of IEEE reference on 10^4 samples", ok)

    data = int.from_bytes(bytes(range(13)), "little")
    parity = ecc.secded_encode(data, 104)
    ok = True
    for flip in range(112):
        d, p = (data ^ (1 << flip), parity) if flip < 104 else (data, parity ^ (1 << (flip - 104)))
        outcome, fixed = ecc.secded_decode(d, p, 104)
        ok &= outcome.status is ecc.DecodeStatus.CORRECTED_SINGLE and fixed == data
    check("ECC corrects all 112 single flips (k=104)", ok)

    ok = True
    for f1, f2 in itertools.combinations(range(112), 2):
        d, p = data, parity
        for flip in (f1, f2):
            if flip < 104:
                d ^= 1 << flip
            else:
                p ^= 1 << (flip - 104)
        outcome, _ = ecc.secded_decode(d, p, 104)
        ok &= outcome.status is ecc.DecodeStatus.DETECTED_DOUBLE
    check("ECC detects all 6216 double flips (k=104)", ok)

    ok = ecc.overhead_accounting("one4n", n=8) == (512, 2560) and ecc.total_protected_bits(8) == 208
    check("one4n accounting: 208 protected bits, 512 redundant, 2560 cells", ok)
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# CLI


def _build_parser():
    parser = argparse.ArgumentParser(prog="sweep", description="FP16 CIM resilience sweeps")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="accuracy-vs-BER sweep to CSV")
    run.add_argument("--config")
    run.add_argument("--ber", help="comma-separated BER list")
    run.add_argument("--field", help="comma-separated field masks")
    run.add_argument("--mode", choices=["static", "dynamic"])
    run.add_argument("--ecc", choices=["on", "off"])
    run.add_argument("--aligned", choices=["on", "off"])
    run.add_argument("--n", type=int)
    run.add_argument("--index", type=int)
    run.add_argument("--runs", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--model")
    run.add_argument("--dataset")
    run.add_argument("--out")
    run.add_argument("--workers", type=int, default=1)

    train = sub.add_parser("train", help="three-group training trace to CSV")
    train.add_argument("--config")
    train.add_argument("--epochs", type=int)
    train.add_argument("--ber", type=float)
    train.add_argument("--seeds", type=int)
    train.add_argument("--seed", type=int, dest="master_seed")
    train.add_argument("--out")

    over = sub.add_parser("overhead", help="redundancy accounting table")
    over.add_argument("--n", type=int, default=8)

    sub.add_parser("selftest", help="exhaustive FP16 and ECC suites")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            overrides = dict(
                ber_list=_parse_float_list(args.ber) if args.ber else None,
                masks=_parse_mask_list(args.field) if args.field else None,
                mode=args.mode,
                ecc=_parse_bool(args.ecc) if args.ecc else None,
                aligned=_parse_bool(args.aligned) if args.aligned else None,
                n=args.n,
                index=args.index,
                runs_per_point=args.runs,
                master_seed=args.seed,
                model=args.model,
                dataset=args.dataset,
                out=args.out,
            )
            cfg = load_sweep_config(args.config, overrides)
            run_sweep(cfg, workers=args.workers)
            print(f"wrote {cfg.out}")
            return 0
        if args.command == "train":
            overrides = dict(
                epochs=args.epochs, ber=args.ber, seeds=args.seeds, master_seed=args.master_seed, out=args.out
            )
            cfg = load_train_config(args.config, overrides)
            run_train_trace(cfg)
            print(f"wrote {cfg.out}")
            return 0
        if args.command == "overhead":
            print(overhead_table(args.n))
            return 0
        if args.command == "selftest":
            return selftest()
    except _OutputError as e:
        print(f"output error: {e}", file=sys.stderr)
        return EXIT_BAD_OUTPUT
    except (ConfigError, FileNotFoundError, tensorfile.ParseError, TypeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
