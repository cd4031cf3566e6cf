from adaptsr.data.corpus import (
    PATTERNS,
    from_pil,
    load_corpus,
    load_png_folder,
    make_pattern,
    make_synthetic_corpus,
    save_corpus,
    to_pil,
)
from adaptsr.data.degrade import add_gaussian_noise, degrade, gaussian_blur, jpeg_roundtrip
from adaptsr.data.models import CorpusConfig, DegradationConfig, PatchPair, PatchSampler
from adaptsr.data.resize import BicubicUpsampler, bicubic_resize, cubic_kernel, resize_weights
from adaptsr.data.sampler import (
    PairStream,
    PatchPairDataset,
    make_validation_pairs,
    sample_pairs,
    split_corpus,
    stack_pairs,
)
