from __future__ import annotations

from typing import List, Optional

from lcvn.errors import PrerequisiteError
from lcvn.metrics.report import IMAGINATION_COLUMNS, NAVIGATION_COLUMNS, MetricsReport, plot_horizon_curves
from lcvn.pipeline.context import RunContext


def cmd_report(ctx: RunContext, split: Optional[str] = None) -> str:
    """Re-render tables and horizon plots from stored evaluation and ablation results."""
    split = split or ctx.cfg.eval.split
    path = ctx.store.path(f"eval/report_{split}.json")
    if not path.is_file():
        raise PrerequisiteError(f"missing evaluation report: {path} (run `eval` first)")
    report = MetricsReport.read(path)
    report.write(path.parent, name=f"report_{split}")
    plots = path.parent / "plots"
    plot_horizon_curves(report, plots / f"{split}_ssim_at_n.png", "ssim")
    plot_horizon_curves(report, plots / f"{split}_psnr_at_n.png", "psnr")

    sections: List[str] = [
        f"Split: {split}",
        "Navigation",
        report.table(NAVIGATION_COLUMNS),
        "",
        "Imagination",
        report.table(IMAGINATION_COLUMNS),
    ]
    for key in sorted(ctx.store.list_keys("ablations")):
        if key.endswith("ablation.txt"):
            sections += ["", ctx.store.get_bytes(key).decode("utf-8").rstrip()]
    text = "\n".join(sections)
    ctx.store.put_bytes("report.txt", (text + "\n").encode("utf-8"))
    ctx.record_command("report", split=split, counts=dict(report.counts))
    return text
