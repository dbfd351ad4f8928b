"""From matching to network inputs: bidirectional similarity maps, the
aligned reference, and the fake reference used during training.

Run: python3 demos/05_similarity_and_warps.py
"""

import numpy as np

from chromatix.correspondence import MatchConfig, bidirectional
from chromatix.encoder import EncoderConfig, GrayEncoder
from chromatix.fusion import (
    fake_reference,
    select_samples_cross_check,
    select_samples_threshold,
    similarity_maps,
    upsample_pyramid,
    warp_chrominance,
)
from chromatix.imagecolor import LabImage

# ---------------------------------------------------------------------------
# Build a target and a reference that share structure: the reference is
# the target rolled by a few pixels, so good matches exist everywhere.

rng = np.random.default_rng(5)
t_l = rng.uniform(10, 90, (40, 40)).astype(np.float32)
r_l = np.roll(t_l, (3, 2), axis=(0, 1))
r_ab = np.stack([np.roll(40.0 * np.sin(t_l / 12.0), (3, 2), (0, 1)),
                 np.roll(30.0 * np.cos(t_l / 9.0), (3, 2), (0, 1))]).astype(
    np.float32)

encoder = GrayEncoder.random_init(EncoderConfig.toy(class_count=0), seed=0)
pyr_t = encoder.extract(t_l)
pyr_r = encoder.extract(r_l)
phi_tr, phi_rt = bidirectional(pyr_t, pyr_r, MatchConfig(seed=1))

# ---------------------------------------------------------------------------
# 1. Ten similarity planes: five per direction, one per pyramid level,
#    all at target resolution. Self-consistent matches score near 1.

sims = similarity_maps(upsample_pyramid(pyr_t.levels, 40, 40),
                       upsample_pyramid(pyr_r.levels, 40, 40),
                       phi_tr, phi_rt)
for i in range(5):
    fwd = sims.t_to_r[i].mean()
    bwd = sims.r_to_t[i].mean()
    print(f"level {i + 1}: mean forward sim {fwd:6.3f}   "
          f"mean backward sim {bwd:6.3f}")

# ---------------------------------------------------------------------------
# 2. The aligned reference pulls reference chrominance onto the target
#    grid through the forward field.

aligned = warp_chrominance(r_ab, phi_tr)
print("\naligned reference extents:", aligned.shape)

# ---------------------------------------------------------------------------
# 3. The fake reference routes the target's own chrominance through the
#    round trip. Where matching is exact it reproduces the ground truth,
#    which is what lets the chrominance branch train without leaking the
#    answer through an identity shortcut.

t_ab = np.stack([40.0 * np.sin(t_l / 12.0),
                 30.0 * np.cos(t_l / 9.0)]).astype(np.float32)
fake = fake_reference(t_ab, phi_tr, phi_rt)
agreement = float(np.mean(np.abs(fake - t_ab) < 1.0))
print(f"fake reference within 1 ab unit of ground truth: "
      f"{100 * agreement:.1f}% of pixels")

# ---------------------------------------------------------------------------
# 4. The two hand-crafted sample selectors kept around for comparison:
#    a top-similarity threshold and strict cycle consistency.

mask_thresh = select_samples_threshold(sims, fraction=0.10)
mask_cycle = select_samples_cross_check(phi_tr, phi_rt)
print(f"\nthreshold selector keeps {mask_thresh.sum()} pixels; "
      f"cycle-consistent pixels: {mask_cycle.sum()} of {mask_cycle.size}")
