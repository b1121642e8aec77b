"""Active-learning workbench for sequence labeling with a linear-chain CRF."""

from .kernels import IMPL_NAME as KERNEL_IMPL

__version__ = "0.1.0"
__all__ = ["KERNEL_IMPL", "__version__"]
