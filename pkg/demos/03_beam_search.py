"""Prefix beam search: exactness, pruning knobs, and LM fusion."""

import math

import numpy as np

from graphtransducer import (
    CountsLm,
    DecodeConfig,
    PosteriorTensor,
    TensorPosteriors,
    beam_search,
    greedy_search,
)
from graphtransducer.verify import exhaustive_best_prefix

rng = np.random.default_rng(1)

# Random posteriors for 4 frames; prefixes up to length 4 need 5 states.
post = PosteriorTensor(rng.normal(0.0, 1.0, (4, 5, 3)))
provider = TensorPosteriors(post)

# With no pruning the beam reproduces exhaustive scoring exactly.
wide = DecodeConfig(beam_size=1000, theta1=0.0, theta2=math.inf)
best, score = beam_search(provider, wide)
oracle_best, oracle_score = exhaustive_best_prefix(post)
print("beam:      ", best, f"{score:.12f}")
print("exhaustive:", oracle_best, f"{oracle_score:.12f}")

# Narrowing the beam can only lower (never raise) the returned score.
for beam_size in (1, 2, 4, 1000):
    _, s = beam_search(provider, DecodeConfig(beam_size=beam_size))
    print(f"beam_size={beam_size:>4}: best score {s:.12f}")

# theta1 floors the per-frame posterior for extensions; theta2 drops
# hypotheses scoring far below the best one.
tight = DecodeConfig(beam_size=1000, theta1=0.05, theta2=5.0)
print("tight pruning:", beam_search(provider, tight))

# Greedy decoding is the cheap baseline over the same posteriors.
print("greedy:", greedy_search(provider, "ctc-like"))

# Shallow fusion: a count-based n-gram reweights prefixes; the insertion
# bonus counteracts the LM's preference for short output.
lm = CountsLm({(): {1: 8, 2: 2}, (1,): {2: 9, 1: 1}}, vocab_size=3)
fused = DecodeConfig(beam_size=1000, lm_weight=0.8, insertion_bonus=0.5)
print("with LM:", beam_search(provider, fused, lm))
