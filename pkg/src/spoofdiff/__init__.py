"""spoofdiff: de-spoofing diffusion pipeline for face anti-spoofing at desk scale.

Two denoising diffusion models (one trained on genuine-plus-attack data, one
on genuine data only) are chained through a deterministic DDIM bridge; the
residual between an input and its genuine-domain reconstruction is the spoof
noise pattern fed to a two-stream depth-supervised detector.
"""

__version__ = "0.1.0"
