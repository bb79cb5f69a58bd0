"""
Latent tree learning - decision trees trained end to end through an exact tree-program solver
"""

__version__ = "0.1.0"
