"""Numerical core: HMM model, moment matching, likelihood derivatives and estimators."""
