from pathlib import Path

from loguru import logger

from calibreg import data
from calibreg.models.dataset import DatasetDescriptor, OodSpec
from calibreg.storage import write_dataset, write_inputs


def default_stem(descriptor: DatasetDescriptor) -> str:
    return f"{descriptor.kind}-k{descriptor.n_classes}-n{descriptor.n_samples}-seed{descriptor.seed}"


def gen_data(
    descriptor: DatasetDescriptor, out_dir: str | Path, ood: OodSpec | None = None, stem: str | None = None
) -> list[Path]:
    out_dir = Path(out_dir)
    stem = stem or default_stem(descriptor)

    dataset = data.generate(descriptor)
    written = [write_dataset(dataset, out_dir / f"{stem}.csv")]

    if ood is not None:
        inputs = data.make_ood(descriptor, ood.n_samples, mode=ood.mode, seed=ood.seed, shift=ood.shift)
        written.append(write_inputs(inputs, descriptor, ood, out_dir / f"{stem}-ood-{ood.mode}.csv"))

    logger.info(f"Generated {descriptor.kind} data: {[str(p) for p in written]}")
    return written
