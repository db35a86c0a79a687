"""Golden LUCI circuits in the compact string format."""
