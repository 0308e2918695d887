"""compositional_kernels

Purpose:
- Kernel toolkit for compositional (microbiome-style) data.

Structure:
- kernel_tools/: the package (core, services, utils, cli, test)
- run_cli.py: command-line entrypoint
"""

from .kernel_tools.core import KernelFamily, KernelSpec, Task, WeightMatrix  # noqa: F401
