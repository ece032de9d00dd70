"""Memory-guided iterative reasoning networks.

A controller reformulates a query over several steps by attending to a
learned shared memory, a termination gate decides how many steps to spend,
and every step's prediction contributes to the answer weighted by the
probability of stopping there. The package applies the machine to knowledge
base completion (``irn.kbc``) and to shortest-path synthesis on random
geometric graphs (``irn.paths``).
"""

__version__ = "0.1.0"
