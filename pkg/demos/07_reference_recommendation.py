"""Reference recommendation: build a descriptor index over a small
corpus, then rank references for a grayscale query in two stages.

Run: python3 demos/07_reference_recommendation.py   (about a minute)
"""

import numpy as np

from chromatix.encoder import EncoderConfig, train_classifier
from chromatix.imagecolor import LabImage, lab_to_rgb, rgb_to_lab
from chromatix.retrieval import build_index, global_rank, local_rank, recommend


def striped_color(cls, rng, size=32):
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    angle = [yy, xx, yy + xx, yy - xx][cls] % 10
    stripes = (angle < 5).astype(np.float64)
    L = np.clip(30.0 + 12.0 * cls + 25.0 * stripes
                + rng.uniform(0, 4, (size, size)), 0, 100)
    palettes = [(45, 10), (-40, 35), (15, -50), (-25, -30)]
    pa, pb = palettes[cls]
    lab = LabImage(L.astype(np.float32),
                   (pa * stripes).astype(np.float32),
                   (pb * stripes).astype(np.float32))
    return rgb_to_lab(lab_to_rgb(lab))


# ---------------------------------------------------------------------------
# 1. A 24-image corpus over 4 classes, and a classifier encoder trained
#    on its luminance channels. All descriptors come from gray inputs:
#    queries are grayscale, so the index must be too.

rng = np.random.default_rng(11)
corpus = [(cls, striped_color(cls, rng)) for cls in range(4) for _ in range(6)]
encoder, _ = train_classifier([(img.L, cls) for cls, img in corpus],
                              EncoderConfig.toy(class_count=4),
                              steps=150, lr=2e-3, batch_size=8, seed=5)

sources = [(f"class{cls}_{i}", lab_to_rgb(img))
           for i, (cls, img) in enumerate(corpus)]
index, report = build_index(sources, encoder, grid=16)
print(f"indexed {len(index)} images; "
      f"global descriptors {index.pca_global.k}-dim, "
      f"local cells {index.pca_local.k}-dim after compression")

# ---------------------------------------------------------------------------
# 2. Stage one narrows to the predicted class and ranks by global
#    descriptor cosine; stage two re-ranks with per-cell matching plus a
#    luminance-histogram term.

query = corpus[13][1]  # a class-2 image; use only its luminance
shortlist = global_rank(query.L, index, encoder)
print(f"\nglobal stage kept {len(shortlist)} candidates; best cosine "
      f"{shortlist[0][1]:.4f}")

ranked, warnings = local_rank(query.L, [cid for cid, _ in shortlist],
                              index, encoder)
print("local stage top 3:")
for cid, score in ranked[:3]:
    print(f"  {score:8.3f}  {index.by_id[cid].locator}")

# ---------------------------------------------------------------------------
# 3. recommend() is the two stages end to end. The query is itself in
#    the corpus, so its own entry wins.

top = recommend(query.L, index, encoder, k=3)
print("\nrecommend top 3:", [index.by_id[cid].locator for cid, _ in top])
