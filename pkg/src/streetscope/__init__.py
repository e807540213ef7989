"""Street-level metrics from traffic cameras.

Modules
-------
imaging       frames, Canny edges, Hough segments
calibration   vanishing points, camera model, ground-plane mapping
registration  world plane to British National Grid
stability     SSIM drift series and kernel change points
groups        Delaunay-threshold pedestrian groups, LOESS smoothing
pipeline      ingestion, batches, store, REST service
synth         synthetic scenes with known truth
"""

from . import calibration, delaunay, groups, imaging, registration, stability, synth

__version__ = "0.1.0"

__all__ = ["calibration", "delaunay", "groups", "imaging", "registration", "stability", "synth"]
