"""Join evaluation under functional dependencies and degree bounds, organized around the FD lattice."""
from .bounds import CPair, solve_cllp, solve_llp
from .lattice import FD, DegreeBound, Lattice, Query, RelationSpec, build_lattice
from .relational import Database, OpCounter, Relation, brute_force_join

__all__ = ["CPair", "Database", "DegreeBound", "FD", "Lattice", "OpCounter", "Query", "Relation", "RelationSpec",
           "brute_force_join", "build_lattice", "solve_cllp", "solve_llp"]
