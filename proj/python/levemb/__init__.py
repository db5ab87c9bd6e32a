"""Edit-distance embeddings: Python bindings to the levemb C++ core."""

from ._levemb import (
    Model,
    chi2_cdf,
    detect_esd,
    evaluate_loss,
    ks_critical_value,
    levenshtein,
    load_checkpoint,
    predicted_variance,
    regularized_gamma_p,
    run_cli,
    sample_correlated_distances,
    sample_independent_distances,
    sym_eigenvalues,
)

__all__ = [
    "Model",
    "chi2_cdf",
    "detect_esd",
    "evaluate_loss",
    "ks_critical_value",
    "levenshtein",
    "load_checkpoint",
    "predicted_variance",
    "regularized_gamma_p",
    "run_cli",
    "sample_correlated_distances",
    "sample_independent_distances",
    "sym_eigenvalues",
]
