"""Pairwise ranking by empirical minimization of U-statistics."""
