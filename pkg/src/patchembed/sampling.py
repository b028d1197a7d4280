"""Spatial-proximity supervision: disjoint 48x48 swatches, each a 3x3 grid
of 16x16 patches; triplets pair two patches of one swatch against a patch
of another swatch of the same image.

All sampling is a pure function of (inputs, seed). Per-image patch pools are
seeded independently of the epoch index, so re-planning an epoch reshuffles
the same triplet multiset; fresh randomness enters training only through
hard-mining refills.
"""

from dataclasses import dataclass

import numpy as np

from .errors import SamplingBudgetError, SamplingError
from .validation import PATCH_SIZE, derive_seed, rng_from

GRID = 3
SWATCH_SIZE = GRID * PATCH_SIZE  # 48
PLACEMENT_BUDGET = 1000


@dataclass(eq=False)
class Patch:
    image_id: str
    top_left: tuple  # (row, col)
    pixels: np.ndarray  # 16 x 16 x 3 view into the source image

    def footprint(self):
        r, c = self.top_left
        return (r, c, r + PATCH_SIZE, c + PATCH_SIZE)


@dataclass(eq=False)
class Swatch:
    image_id: str
    anchor: tuple  # (row, col) of the 48 x 48 region
    patches: tuple  # nine Patch cells, row-major

    def footprint(self):
        r, c = self.anchor
        return (r, c, r + SWATCH_SIZE, c + SWATCH_SIZE)


@dataclass(eq=False)
class Triplet:
    p_c: Patch
    p_n: Patch
    p_f: Patch
    meta: tuple | None = None  # (near_swatch, far_swatch, cell_c, cell_n, cell_f)


def footprints_disjoint(a, b):
    return a[2] <= b[0] or b[2] <= a[0] or a[3] <= b[1] or b[3] <= a[1]


def cut_swatch(image, anchor):
    """Materialize the 3x3 patch grid at ``anchor`` (views, no copies)."""
    r0, c0 = int(anchor[0]), int(anchor[1])
    h, w = image.pixels.shape[:2]
    if r0 < 0 or c0 < 0 or r0 + SWATCH_SIZE > h or c0 + SWATCH_SIZE > w:
        raise SamplingError(f"{image.image_id}: swatch at {anchor} exceeds {h}x{w}")
    patches = []
    for i in range(GRID):
        for j in range(GRID):
            r, c = r0 + i * PATCH_SIZE, c0 + j * PATCH_SIZE
            patches.append(
                Patch(image.image_id, (r, c), image.pixels[r : r + PATCH_SIZE, c : c + PATCH_SIZE])
            )
    return Swatch(image.image_id, (r0, c0), tuple(patches))


def sample_swatches(image, count, rng_seed):
    """Place ``count`` pairwise-disjoint swatches by rejection sampling."""
    h, w = image.pixels.shape[:2]
    if h < SWATCH_SIZE or w < SWATCH_SIZE:
        raise SamplingError(
            f"{image.image_id}: image {h}x{w} cannot host a {SWATCH_SIZE}x{SWATCH_SIZE} swatch"
        )
    rng = rng_from(rng_seed)
    taken = []
    swatches = []
    for _ in range(int(count)):
        placed = False
        for _ in range(PLACEMENT_BUDGET):
            r = int(rng.integers(0, h - SWATCH_SIZE + 1))
            c = int(rng.integers(0, w - SWATCH_SIZE + 1))
            fp = (r, c, r + SWATCH_SIZE, c + SWATCH_SIZE)
            if all(footprints_disjoint(fp, t) for t in taken):
                taken.append(fp)
                swatches.append(cut_swatch(image, (r, c)))
                placed = True
                break
        if not placed:
            raise SamplingBudgetError(
                f"{image.image_id}: placement budget exhausted after "
                f"{len(swatches)} of {count} swatches"
            )
    return swatches


def sample_one_triplet(swatches, rng):
    near_idx = int(rng.integers(0, len(swatches)))
    far_idx = int(rng.integers(0, len(swatches) - 1))
    if far_idx >= near_idx:
        far_idx += 1
    cells = rng.choice(GRID * GRID, size=2, replace=False)
    cell_c, cell_n = int(cells[0]), int(cells[1])
    cell_f = int(rng.integers(0, GRID * GRID))
    near, far = swatches[near_idx], swatches[far_idx]
    return Triplet(
        p_c=near.patches[cell_c],
        p_n=near.patches[cell_n],
        p_f=far.patches[cell_f],
        meta=(near_idx, far_idx, cell_c, cell_n, cell_f),
    )


def make_triplets(swatches, per_image, rng_seed):
    """Draw ``per_image`` (current, near, far) triplets from one image's swatches."""
    if len(swatches) < 2:
        raise SamplingError(f"need at least 2 swatches, got {len(swatches)}")
    rng = rng_from(rng_seed)
    return [sample_one_triplet(swatches, rng) for _ in range(int(per_image))]


@dataclass(frozen=True)
class SamplerConfig:
    swatches_per_image: int = 6
    triplets_per_image: int = 90
    batch_size: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.swatches_per_image < 2:
            raise SamplingError("swatches_per_image must be >= 2")
        if self.triplets_per_image < 1 or self.batch_size < 1:
            raise SamplingError("triplets_per_image and batch_size must be >= 1")


@dataclass
class TripletEpoch:
    epoch_index: int
    batches: list  # list of lists of Triplet
    swatches: dict  # image_id -> list of Swatch

    @property
    def n_triplets(self):
        return sum(len(b) for b in self.batches)


# seed-tree tags: keep disjoint from trainer tags in training.py
_TAG_POOL = 0
_TAG_SHUFFLE = 1


def image_pool_seed(seed, image_index):
    return derive_seed(seed, _TAG_POOL, image_index)


def plan_epoch(corpus, config, epoch_index=0):
    """Assemble one epoch: per-image triplet pools shuffled into batches.

    The pools depend only on (seed, image index); the epoch index only
    reshuffles, so every epoch sees the same triplet multiset in a new order.
    """
    if not corpus:
        raise SamplingError("empty corpus")
    triplets = []
    swatches = {}
    for idx, image in enumerate(corpus):
        pool_rng = rng_from(image_pool_seed(config.seed, idx))
        sw = sample_swatches(image, config.swatches_per_image, pool_rng)
        swatches[image.image_id] = sw
        triplets.extend(make_triplets(sw, config.triplets_per_image, pool_rng))
    shuffle_rng = rng_from(derive_seed(config.seed, _TAG_SHUFFLE, epoch_index))
    order = shuffle_rng.permutation(len(triplets))
    shuffled = [triplets[i] for i in order]
    batches = [
        shuffled[i : i + config.batch_size] for i in range(0, len(shuffled), config.batch_size)
    ]
    return TripletEpoch(epoch_index=epoch_index, batches=batches, swatches=swatches)


def fresh_triplet(corpus, rng):
    """One brand-new triplet from two fresh disjoint swatches of a random image."""
    image = corpus[int(rng.integers(0, len(corpus)))]
    swatches = sample_swatches(image, 2, rng)
    return sample_one_triplet(swatches, rng)


def dump_plan(epoch, path):
    """Audit dump: image ids, swatch anchors, and triplet cell indices."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# epoch {epoch.epoch_index}\n")
        for image_id, swatches in epoch.swatches.items():
            anchors = " ".join(f"({s.anchor[0]},{s.anchor[1]})" for s in swatches)
            fh.write(f"swatches\t{image_id}\t{anchors}\n")
        for b, batch in enumerate(epoch.batches):
            for t in batch:
                near_sw, far_sw, cc, cn, cf = t.meta if t.meta else (-1, -1, -1, -1, -1)
                fh.write(
                    f"triplet\t{b}\t{t.p_c.image_id}\t{near_sw}\t{far_sw}\t{cc}\t{cn}\t{cf}\n"
                )
