import itertools
import logging
import math
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch.utils.data import DataLoader, Dataset, Sampler, default_collate

from adaptsr.data.degrade import degrade
from adaptsr.data.models import DegradationConfig, PatchPair, PatchSampler
from adaptsr.errors import DimensionError, InvalidConfigError

logger = logging.getLogger(__name__)

VALIDATION_STREAM = 2 ** 31 - 1


def patch_states(cfg: DegradationConfig, sampler: PatchSampler, stream: int, counter: int) -> Tuple[int, int]:
    """
    Two independent seeds for one patch: one for the crop (and profile draw),
    one for the degradation. Derived from the counter, so patches can be made
    in any order or in parallel.
    """
    crop, corrupt = np.random.SeedSequence([cfg.seed, sampler.seed, stream, counter]).generate_state(2)
    return int(crop), int(corrupt)


def _crop(
    corpus: Sequence[torch.Tensor],
    image_index: int,
    size: int,
    rng: np.random.Generator,
) -> Tuple[torch.Tensor, int, int]:
    image = corpus[image_index]
    h, w = image.shape[-2:]
    if size > h or size > w:
        raise DimensionError(f"patch {size} does not fit image {image_index} ({h}×{w})")
    top = int(rng.integers(0, h - size + 1))
    left = int(rng.integers(0, w - size + 1))
    return image[:, top:top + size, left:left + size].contiguous(), top, left


def make_pair(
    corpus: Sequence[torch.Tensor],
    sampler: PatchSampler,
    cfg: DegradationConfig,
    stream: int,
    counter: int,
    image_index: Optional[int] = None,
    unknown_mix_ratio: float = 0.0,
) -> PatchPair:
    crop_state, corrupt_state = patch_states(cfg, sampler, stream, counter)
    rng = np.random.default_rng(crop_state)
    if image_index is None:
        image_index = int(rng.integers(0, len(corpus)))
    hr, top, left = _crop(corpus, image_index, sampler.patch_size, rng)

    profile, profile_cfg = "target", cfg
    if cfg.is_bicubic:
        profile = "bicubic"
    elif rng.random() < unknown_mix_ratio:
        profile, profile_cfg = "unknown", cfg.unknown_profile()

    lr = degrade(hr, profile_cfg, corrupt_state)
    return PatchPair(lr=lr, hr=hr, seed=corrupt_state, image_index=image_index, top=top, left=left, profile=profile)


# =========================
# TRAINING PAIRS
# =========================
def sample_pairs(
    corpus: Sequence[torch.Tensor],
    sampler: PatchSampler,
    cfg: DegradationConfig,
    n_batch: int,
    batch_index: int = 0,
    unknown_mix_ratio: float = 0.0,
) -> List[PatchPair]:
    """
    n_batch random HR crops with their degraded LR. Patch k of batch b is fully
    determined by (cfg.seed, sampler.seed, b, k).
    """
    if not corpus:
        raise InvalidConfigError("corpus is empty")
    if not 0.0 <= unknown_mix_ratio <= 1.0:
        raise InvalidConfigError(f"unknown_mix_ratio must be in [0, 1], got {unknown_mix_ratio}")
    sampler.check(cfg)
    return [
        make_pair(corpus, sampler, cfg, stream=batch_index, counter=k, unknown_mix_ratio=unknown_mix_ratio)
        for k in range(n_batch)
    ]


def stack_pairs(pairs: Sequence[PatchPair]) -> Tuple[torch.Tensor, torch.Tensor]:
    return torch.stack([p.lr for p in pairs]), torch.stack([p.hr for p in pairs])


# =========================
# VALIDATION PAIRS
# =========================
def split_corpus(
    corpus: Sequence[torch.Tensor],
    val_count: int,
    per_image: int,
) -> Tuple[List[torch.Tensor], List[torch.Tensor]]:
    """
    Holds out the last ceil(val_count / per_image) images for validation.
    """
    held_out = max(1, math.ceil(val_count / per_image))
    if held_out >= len(corpus):
        raise InvalidConfigError(
            f"corpus of {len(corpus)} images is too small to hold out {held_out} for validation"
        )
    return list(corpus[:-held_out]), list(corpus[-held_out:])


def make_validation_pairs(
    images: Sequence[torch.Tensor],
    sampler: PatchSampler,
    cfg: DegradationConfig,
    count: int,
) -> List[PatchPair]:
    """
    `count` pairs, per_image consecutive crops from each held-out image, on a
    seed stream disjoint from training.
    """
    if count < 1:
        raise InvalidConfigError(f"validation count must be >= 1, got {count}")
    sampler.check(cfg)
    return [
        make_pair(
            images, sampler, cfg,
            stream=VALIDATION_STREAM,
            counter=i,
            image_index=(i // sampler.per_image) % len(images),
        )
        for i in range(count)
    ]


# =========================
# PREFETCHING STREAM
# =========================
class PatchPairDataset(Dataset):
    """
    Map-style view of the training pairs: item i is patch k = i % batch of
    batch b = i // batch, as (lr, hr). Every item comes from its own
    counter-derived seeds, so workers may build them in any order.
    """

    def __init__(
        self,
        corpus: Sequence[torch.Tensor],
        sampler: PatchSampler,
        cfg: DegradationConfig,
        batch: int,
        unknown_mix_ratio: float = 0.0,
    ):
        if not corpus:
            raise InvalidConfigError("corpus is empty")
        if not 0.0 <= unknown_mix_ratio <= 1.0:
            raise InvalidConfigError(f"unknown_mix_ratio must be in [0, 1], got {unknown_mix_ratio}")
        sampler.check(cfg)
        self.corpus = list(corpus)
        self.sampler = sampler
        self.cfg = cfg
        self.batch = batch
        self.unknown_mix_ratio = unknown_mix_ratio

    def __getitem__(self, index: int) -> Tuple[torch.Tensor, torch.Tensor]:
        batch_index, k = divmod(index, self.batch)
        pair = make_pair(
            self.corpus, self.sampler, self.cfg,
            stream=batch_index,
            counter=k,
            unknown_mix_ratio=self.unknown_mix_ratio,
        )
        return pair.lr, pair.hr


class EndlessIndices(Sampler[int]):
    def __iter__(self) -> Iterator[int]:
        return itertools.count()


def _single_thread_worker(worker_id: int) -> None:
    torch.set_num_threads(1)


class PairStream:
    """
    Endless stream of (lr, hr) batches. Batch b always holds the same content;
    with workers > 1 a DataLoader builds up to `prefetch` batches per worker
    ahead and hands them out in order.
    """

    def __init__(
        self,
        corpus: Sequence[torch.Tensor],
        sampler: PatchSampler,
        cfg: DegradationConfig,
        batch: int,
        workers: int = 1,
        prefetch: int = 4,
        unknown_mix_ratio: float = 0.0,
    ):
        if batch < 1 or workers < 1 or prefetch < 1:
            raise InvalidConfigError("batch, workers and prefetch must be >= 1")
        self.dataset = PatchPairDataset(corpus, sampler, cfg, batch, unknown_mix_ratio)
        self.batch = batch
        self.workers = workers
        self.prefetch = prefetch

        num_workers = workers if workers > 1 else 0
        self.loader = DataLoader(
            self.dataset,
            batch_size=batch,
            sampler=EndlessIndices(),
            num_workers=num_workers,
            prefetch_factor=prefetch if num_workers else None,
            worker_init_fn=_single_thread_worker if num_workers else None,
            generator=torch.Generator().manual_seed(cfg.seed),
        )
        self._batches: Optional[Iterator[Tuple[torch.Tensor, torch.Tensor]]] = None
        logger.debug(f"[Data] pair stream: batch {batch}, {num_workers} loader workers")

    def build(self, batch_index: int) -> Tuple[torch.Tensor, torch.Tensor]:
        start = batch_index * self.batch
        lr, hr = default_collate([self.dataset[i] for i in range(start, start + self.batch)])
        return lr, hr

    def __iter__(self):
        return self

    def __next__(self) -> Tuple[torch.Tensor, torch.Tensor]:
        if self._batches is None:
            self._batches = iter(self.loader)
        lr, hr = next(self._batches)
        return lr, hr

    def close(self) -> None:
        # dropping the iterator shuts the loader workers down
        self._batches = None

    def __enter__(self) -> "PairStream":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
