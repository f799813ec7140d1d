"""
Alternating training of flow parameters and the base distribution.
Holds the training config, the optimizers and the epoch/fit loop.
"""
