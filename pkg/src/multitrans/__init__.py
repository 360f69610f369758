"""Toy-scale multimodal transformer: image + text encoders, self-attention
fusion, and a softmax outcome classifier, on a gradient-checked autodiff core.
"""

from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"
__all__ = ["KERNEL_BACKEND", "__version__"]
