"""Convert an export of the survival-package ``rats`` table to the fit CSV schema.

The table is not bundled. Export it yourself, e.g. from R:

    write.csv(survival::rats, "rats_raw.csv", row.names = FALSE)

then run

    python scripts/fetch_rats.py rats_raw.csv data/rats.csv --female-only

and fit with

    pofrailty fit --data data/rats.csv --cluster-col litter --time-col time \
        --event-col status --covariates rx --expect-beta 2.56 --expect-rho 0.75

The SHA-256 printed at the end identifies the variant that was analysed.
"""

from __future__ import annotations

import argparse
import hashlib
from pathlib import Path

import pandas as pd

COLUMNS = ["litter", "rx", "time", "status"]


def convert(source: Path, target: Path, female_only: bool) -> str:
    frame = pd.read_csv(source)
    frame.columns = [str(c).strip().strip('"').lower() for c in frame.columns]
    missing = [c for c in COLUMNS if c not in frame.columns]
    if missing:
        raise SystemExit(f"{source}: missing column(s) {', '.join(missing)}")
    if female_only:
        if "sex" not in frame.columns:
            raise SystemExit(f"{source}: --female-only needs a 'sex' column")
        frame = frame[frame["sex"].astype(str).str.lower().isin({"f", "female"})]
    out = frame[COLUMNS].copy()
    out["litter"] = out["litter"].astype(int).astype(str)
    out["rx"] = out["rx"].astype(int)
    out["status"] = out["status"].astype(int)
    target.parent.mkdir(parents=True, exist_ok=True)
    out.to_csv(target, index=False, lineterminator="\n")
    return hashlib.sha256(target.read_bytes()).hexdigest()


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("source", type=Path)
    parser.add_argument("target", type=Path)
    parser.add_argument("--female-only", action="store_true")
    args = parser.parse_args()
    digest = convert(args.source, args.target, args.female_only)
    print(f"wrote {args.target}")
    print(f"sha256 {digest}")


if __name__ == "__main__":
    main()
