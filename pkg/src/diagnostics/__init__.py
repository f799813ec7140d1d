"""
Normality diagnostics for flow outputs.
KS statistics per channel and location, mean-shift summaries and the KL identity check.
"""
