"""chromatix: exemplar-based image colorization.

Subsystems: numerics (autodiff core), imagecolor (Lab pipelines and
histograms), encoder (grayscale feature pyramids), correspondence
(dense matching), fusion (similarity maps and warps), colornet (the
chrominance-prediction U-net), training (two-branch trainer), retrieval
(reference recommendation), and app (store, HTTP service, CLI).
"""

__version__ = "0.1.0"
