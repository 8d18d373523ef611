"""Semantic exception hierarchy shared by all trianglecert modules."""


class DomainError(ValueError):
    """An argument is outside the documented domain of an operation."""


class CapacityError(RuntimeError):
    """A requested object would exceed the addressable/materializable size."""


class StateError(RuntimeError):
    """An operation was called in a state it does not support."""
