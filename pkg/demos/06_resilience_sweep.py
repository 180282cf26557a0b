"""A small accuracy-vs-BER sweep: field-sensitivity characterization and
protected-vs-unprotected curves.  Writes CSV next to this script."""

import pathlib

from fpcim import sweep
from fpcim.inject import FieldMask

here = pathlib.Path(__file__).parent

# Field sensitivity of the plain (unaligned, per-weight storage) model.
cfg = sweep.SweepConfig(
    ber_list=[1e-4, 1e-3, 1e-2],
    masks=[FieldMask.MANTISSA, FieldMask.SIGN, FieldMask.EXPONENT],
    mode="static",
    ecc=False,
    aligned=False,
    runs_per_point=25,
    master_seed=2024,
    model="builtin:small",
    dataset="builtin:small",
    out=str(here / "sensitivity.csv"),
)
lines = sweep.run_sweep(cfg)
print(f"wrote {cfg.out} ({len(lines)} lines)")
print("\nmean accuracy by (ber, mask):")
for line in lines:
    parts = line.split(",")
    if parts[6] == "mean":
        print(f"  ber={float(parts[0]):<8g} {parts[1]:9s} acc={float(parts[8]):.4f}")

# Protection: the same aligned model on a plain macro vs the one4n macro.
for ecc, name in ((False, "unprotected"), (True, "protected")):
    cfg = sweep.SweepConfig(
        ber_list=[1e-4, 5e-4],
        masks=[FieldMask.FULL],
        mode="static",
        ecc=ecc,
        aligned=True,
        runs_per_point=25,
        master_seed=2025,
        model="builtin:small",
        dataset="builtin:small",
        out=str(here / f"protection_{name}.csv"),
    )
    lines = sweep.run_sweep(cfg)
    means = [l.split(",") for l in lines if ",mean," in l]
    accs = {float(m[0]): float(m[8]) for m in means}
    print(f"\n{name}: " + "  ".join(f"ber={b:g}: {a:.4f}" for b, a in accs.items()))

print("\n(the `sweep run` command produces the same CSVs from a config file)")
