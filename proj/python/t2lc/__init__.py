"""Two-level group convolution toolkit."""

from ._core import (
    ConfigError,
    GroupSpec,
    IngestError,
    NumericError,
    ProtocolError,
    TwoLevelParams,
    __version__,
    channel_shuffle,
    channel_unshuffle,
    coarse_combined_apply,
    coarse_restrict,
    finite_diff_check,
    forward_distributed,
    group_conv,
    layer_param_count,
    model_param_count,
    run_cli,
    standard_conv,
    train_toy,
    two_level,
    verify,
)

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
