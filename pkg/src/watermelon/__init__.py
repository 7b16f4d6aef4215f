"""Non-intersecting random-walk bridges and their determinantal machinery.

Subpackages cover: orthogonal-polynomial evaluation (special_polys), exact
walk laws, samplers and enumeration oracles (walk_ensembles), correlation
kernels and k-point functions (kernels), polymer partition functions and
chaos expansions (chaos_polymer), lattice-path determinants and the
log-weight scaling pipeline (grsk), overlap-time statistics (overlap), and
the command-line front end (cli).  acceptance holds the oracle-backed
verification suite.
"""

__version__ = "0.1.0"
