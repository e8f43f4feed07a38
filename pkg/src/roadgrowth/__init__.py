"""Urban growth simulation with learned road-network representations.

Road polylines are indexed per grid cell, clipped into per-cell fragment
sequences, and compressed into fixed-length codes by per-axis LSTM
autoencoders. Those codes join raster patch codes and neighborhood states as
features of a decision-tree transition function inside a synchronous
cellular automaton, validated with the standard land-change metrics.
"""

__version__ = "0.1.0"
