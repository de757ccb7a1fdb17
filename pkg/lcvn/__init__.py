"""Language-conditioned visual navigation at desk scale.

Synthetic worlds, a diffusion-forcing latent world model, a latent actor-critic,
a unified autoregressive action+observation agent and the evaluation suite.
"""

__version__ = "0.1.0"
