from pathlib import Path
import argparse
import json
import logging
from typing import Any, Dict, List, Optional

from tqdm import tqdm

"""
File: scripts/run_desk_benchmark.py

Desk-scale trend check: for each seed, generate a dataset, train the world
model + actor-critic (and optionally the unified model), evaluate on the
seen and unseen validation splits, run the language ablation, and report
whether each directional claim holds:

  sr_vs_random      trained agent SR >= 3x random-policy SR and >= 0.3
  language_helps    removing language lowers SR and raises DreamSim
  horizon_degrades  mean SSIM@n <= mean SSIM@1 for the world model
  unseen_harder     val_unseen SR <= val_seen SR for every trained family

Usage:
    python scripts/run_desk_benchmark.py --out-dir ./runs/bench --seeds 0 1 2
"""

from lcvn.config import load_run_config
from lcvn.metrics.report import MetricsReport
from lcvn.pipeline import AblationSpec, RunContext, cmd_ablate, cmd_eval, cmd_generate, cmd_train, seed_everything

logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s")
logger = logging.getLogger("desk_benchmark")


def _row(report: MetricsReport, family: str) -> Dict[str, Optional[float]]:
    recs = [r for r in report.records if r.family == family]
    pooled = MetricsReport(records=recs, horizon_n=report.horizon_n)
    rows = pooled.aggregate()
    if not rows:
        return {}
    keys = ("sr", "ssim", "ssim_at_n", "dreamsim")
    return {k: _mean([row[k] for row in rows]) for k in keys}


def _mean(values: List[Optional[float]]) -> Optional[float]:
    kept = [v for v in values if v is not None]
    return sum(kept) / len(kept) if kept else None


def run_seed(seed: int, out_dir: Path, config: Optional[str], overrides: List[str], with_uni: bool) -> Dict[str, Any]:
    families = ["wm_ac", "random"] + (["uni"] if with_uni else [])
    cfg = load_run_config(
        config,
        [*overrides, f"seed={seed}", f"datagen.seed={seed}", f"run_id=bench-s{seed}",
         f"output_dir={out_dir / f'seed{seed}'}", f"eval.families={json.dumps(families)}"],
    )
    seed_everything(seed)
    ctx = RunContext.open(cfg)
    cmd_generate(ctx, progress=False)
    for phase in ("wm", "ac") + (("uni",) if with_uni else ()):
        cmd_train(ctx, phase, progress=True)
    seen = cmd_eval(ctx, split="val_seen")
    unseen = cmd_eval(ctx, split="val_unseen")
    ablation = cmd_ablate(ctx, AblationSpec.for_axis("language"))
    lang = {(r["variant"], r["family"]): r for r in ablation.rows}
    return {
        "seed": seed,
        "seen": {f: _row(seen, f) for f in families},
        "unseen": {f: _row(unseen, f) for f in families},
        "language": {
            "with": lang.get(("with_language", "wm_ac"), {}),
            "without": lang.get(("no_language", "wm_ac"), {}),
        },
    }


def _lt(a: Optional[float], b: Optional[float]) -> bool:
    return a is not None and b is not None and a < b


def check_trends(results: List[Dict[str, Any]], trained: List[str]) -> Dict[str, bool]:
    checks = {"sr_vs_random": True, "language_helps": True, "horizon_degrades": True, "unseen_harder": True}
    for res in results:
        agent, rand = res["seen"]["wm_ac"], res["seen"]["random"]
        sr, sr_rand = agent.get("sr") or 0.0, rand.get("sr") or 0.0
        checks["sr_vs_random"] &= sr >= 0.3 and sr >= 3.0 * sr_rand
        with_l, without_l = res["language"]["with"], res["language"]["without"]
        checks["language_helps"] &= _lt(without_l.get("sr"), with_l.get("sr")) and _lt(
            with_l.get("dreamsim"), without_l.get("dreamsim")
        )
        ssim1, ssim_n = agent.get("ssim"), agent.get("ssim_at_n")
        checks["horizon_degrades"] &= ssim1 is not None and ssim_n is not None and ssim_n <= ssim1
        for fam in trained:
            checks["unseen_harder"] &= (res["unseen"][fam].get("sr") or 0.0) <= (res["seen"][fam].get("sr") or 0.0)
    return checks


def main():
    parser = argparse.ArgumentParser(description="Multi-seed desk-scale trend check")
    parser.add_argument("--out-dir", type=str, default="./runs/desk_benchmark")
    parser.add_argument("--config", type=str, default=None, help="YAML run config applied to every seed")
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--with-uni", action="store_true", help="also train and evaluate the unified model")
    parser.add_argument("overrides", nargs="*", help="section.key=value config overrides")
    args = parser.parse_args()

    out_dir = Path(args.out_dir)
    results = []
    for seed in tqdm(args.seeds, desc="seeds"):
        results.append(run_seed(seed, out_dir, args.config, args.overrides, args.with_uni))

    trained = ["wm_ac"] + (["uni"] if args.with_uni else [])
    checks = check_trends(results, trained)
    summary = {"results": results, "checks": checks}
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "benchmark.json").write_text(json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8")
    for name, ok in checks.items():
        logger.info("%-18s %s", name, "holds" if ok else "does not hold")
    logger.info("Summary written to %s", out_dir / "benchmark.json")


if __name__ == "__main__":
    main()
