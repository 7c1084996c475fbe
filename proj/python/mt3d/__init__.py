"""LiDAR single-object tracking toolkit: point ops, SSM scans, propagation,
metrics, and a synthetic tracklet generator."""

try:
    from ._mt3d import *  # noqa: F401,F403  (wheel layout)
except ImportError:  # in-tree build: extension sits on sys.path directly
    from _mt3d import *  # noqa: F401,F403
