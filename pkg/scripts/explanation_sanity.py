"""Check that the lag-1 weight variation and a lagged temperature lead every ranking."""
from __future__ import annotations

import argparse
import json

from honeycast.evaluate import split_train_test_by_history
from honeycast.pipeline import ExplainConfig, explain_model, fit_kind, synthetic_matrices
from honeycast.synthgen import ScenarioConfig

TEMPERATURE = ("d_avg_temp_c_lag", "d_max_temp_c_lag", "d_min_temp_c_lag")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--runs", type=int, default=10)
    ap.add_argument("--top", type=int, default=5)
    ap.add_argument("--kinds", nargs="+", default=["rf", "gbt"])
    ap.add_argument("--rows", type=int, default=100, help="test rows explained per run")
    ap.add_argument("--mc-samples", type=int, default=512)
    args = ap.parse_args()

    cfg = ExplainConfig(background_size=100, mc_samples=args.mc_samples, n_rows=args.rows,
                        n_repeats=5)
    passed = 0
    for seed in range(args.runs):
        mats, _, _ = synthetic_matrices(ScenarioConfig(seed=seed))
        train, test = split_train_test_by_history(mats["production"])
        tops, ok = {}, True
        for kind in args.kinds:
            model = fit_kind(kind, train, None, seed)
            scores, _ = explain_model(model, train, test, cfg, seed)
            for method, e in scores.items():
                top = e.ranking()[:args.top]
                tops[f"{kind}/{method}"] = top
                ok &= "d_weight_lag1" in top and any(f.startswith(TEMPERATURE) for f in top)
        passed += ok
        print(json.dumps({"seed": seed, "pass": bool(ok), "top": tops}), flush=True)
    print(f"{passed}/{args.runs} runs pass")


if __name__ == "__main__":
    main()
