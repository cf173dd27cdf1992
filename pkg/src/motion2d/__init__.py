"""2D skeleton motion generation toolkit.

Covers the full desk-scale pipeline: corpus cleaning, text conditioning,
a dual-tower diffusion denoiser, DDIM sampling, contrastive evaluation
(FID, R-precision, MM Dist, Diversity), two-stage training, and rendering.
"""

__version__ = "0.1.0"
