"""ECG wave segmentation with physics-informed preprocessing.

Synthetic Gaussian PQRST records, spectral validation, signal transforms
(Hilbert envelope, Euler derivative, Gauss-Legendre smoothing) and a numpy
ConvBiLSTM segmenter with a seeded comparison harness.
"""

__version__ = "0.1.0"
