"""Exception types shared across the package."""


class DataError(Exception):
    """Invalid input data (files, datasets, graphs on disk).

    The CLI maps this to exit code 1 with a machine-readable message.
    """


class GraphError(Exception):
    """A working-graph operation was applied in an invalid state."""
