"""hexluci - defect-aware LUCI circuits for hex-grid surface codes."""

__version__ = "1.0.0"
