from ._mlab import (
    MlabError,
    __version__,
    amplitude,
    check_elliptic_window,
    check_transition_window,
    classify,
    config,
    parse_j_range,
    preset_names,
    run,
    sha256_hex,
    summary,
    theta_prime,
)

__all__ = [
    "MlabError",
    "amplitude",
    "check_elliptic_window",
    "check_transition_window",
    "classify",
    "config",
    "parse_j_range",
    "preset_names",
    "run",
    "sha256_hex",
    "summary",
    "theta_prime",
]
