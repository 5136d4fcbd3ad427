"""Generate a synthetic panel with injected defects and audit the cleaning filters."""
from __future__ import annotations

import argparse
import json
import tempfile
from pathlib import Path

from honeycast.ingest import read_hive_frame, resample_frame
from honeycast.preprocess import CleaningParams
from honeycast.synthgen import ScenarioConfig, audit_cleaning, generate_panel


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-hives", type=int, default=ScenarioConfig.n_hives)
    ap.add_argument("--rolling-z", type=float, default=CleaningParams.rolling_threshold,
                    help="threshold of the rolling-window filter")
    ap.add_argument("--variation-z", type=float, default=CleaningParams.variation_threshold)
    ap.add_argument("--out", help="write the audit JSON here as well")
    args = ap.parse_args()

    params = CleaningParams(rolling_threshold=args.rolling_z, variation_threshold=args.variation_z)
    with tempfile.TemporaryDirectory() as tmp:
        manifest = generate_panel(ScenarioConfig(seed=args.seed, n_hives=args.n_hives), tmp)
        frame, _ = read_hive_frame(Path(tmp) / "hives.csv")
    audit = audit_cleaning(resample_frame(frame), manifest, params).to_dict()
    text = json.dumps(audit, indent=2, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")


if __name__ == "__main__":
    main()
