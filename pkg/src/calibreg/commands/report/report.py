from pathlib import Path

from loguru import logger

from calibreg import metrics
from calibreg.models.config import MetricOptions
from calibreg.storage import read_log, write_models_csv


def report_logs(paths: list[str | Path], options: MetricOptions, out_dir: str | Path) -> list[Path]:
    """Writes ``<stem>-reliability.csv`` and ``<stem>-entropy.csv`` for every prediction log."""
    out_dir = Path(out_dir)
    written = []
    for path in map(Path, paths):
        log = read_log(path)
        labeled = log.subset(~log.ood & log.has_label)

        if len(labeled):
            written.append(
                write_models_csv(metrics.reliability_curve(labeled, options.bins), out_dir / f"{path.stem}-reliability.csv")
            )
        else:
            logger.warning(f"{path} has no labeled in-distribution rows; skipping the reliability curve")

        written.append(
            write_models_csv(metrics.entropy_histogram(log, options.entropy_bins), out_dir / f"{path.stem}-entropy.csv")
        )
        logger.info(f"Reported {path} ({len(log)} rows, {int(log.ood.sum())} OOD)")
    return written
