from .helpers import format_float, load_matrix, random_unit_vector

__all__ = ["format_float", "load_matrix", "random_unit_vector"]
