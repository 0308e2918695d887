from .errors import CompositionalKernelError, DataError, NumericalError, UsageError
from .schemas import FittedModelRecord, KernelFamily, KernelSpec, SelectionRow, SimDesign, Task, WeightMatrix
from .config import RunConfig
