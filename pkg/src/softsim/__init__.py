"""softsim: deterministic CPU benchmark suite for deformable-object manipulation.

Particle simulator (cloth, rope, fluid), ten manipulation tasks with seeded
variation generators, normalized-performance evaluation, a sampling-based
planner, and a small software renderer, all reproducible bit for bit.
"""

__version__ = "0.1.0"
