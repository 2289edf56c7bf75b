"""Adversarial inpainting of square-masked grayscale images.

A cascaded U-net generator is trained against a context-conditioned global
patch discriminator and a region-only local patch discriminator, with
Gram-matrix style and discriminator-feature perceptual losses. Everything
runs on numpy; the hot gather/scatter kernels have numba-jitted variants
(see `inpaint_forge.backend`).
"""

__version__ = "0.1.0"

VGG_WEIGHTS_ENV = "INPAINT_FORGE_VGG_WEIGHTS"
BACKEND_ENV = "INPAINT_FORGE_BACKEND"
