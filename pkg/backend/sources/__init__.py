from .synthetic import SyntheticSource
from .table import StokesTableSource
