"""kernel_tools package

Purpose:
- Kernel methods for compositional data (relative abundances on the simplex):
  a kernel catalog with optional prior weights, kernel ridge regression and
  classification with hierarchical model selection, simplex-aware
  interpretation (CFI / CPD) and kernel PCA.
- Expose those services as a batch command line writing CSV / JSON / SVG files.

Structure:
- core/: schemas, exception taxonomy, run configuration
- services/: compdata/kernels/weighting/newick/learn/interpret/embed/datio/simgen/plots
- utils/: pure helpers (overflow-safe power means, eigenvalue checks, seeded normals)
- cli/: argparse sub-commands and exit codes
"""

from .core.schemas import KernelFamily, KernelSpec, Task, WeightMatrix  # noqa: F401
