from .local import LocalTableStorage
