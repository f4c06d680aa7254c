"""Phase-based Eulerian motion representations for action recognition.

Submodules:
    container    tensor file format (length-prefixed JSON header + raw blob)
    ops          dense numeric kernels: conv2d, batch norm, FC, softmax-CE, pooling
    spectral     real-input 2D FFT magnitudes over the non-redundant half plane
    optim        SGD with momentum and a stepped learning-rate schedule
    gabor        complex Gabor kernels and quadrature/perpendicular filter banks
    phase_layer  trainable perpendicular complex convolution + phase extraction
    motion       video clips, temporal derivatives (dGray/dRGB/dPhase), synthetic data
    layers       layer objects wiring ops into a trainable graph
    network      model assembly, training loop, evaluation
    oracle       slow independent reference implementations used by the tests
    viz          signed-map rendering and filter-grid tiling
    cli          command-line entry points

Heavy imports are deferred to the submodules so the CLI can pin BLAS thread
counts before numpy loads.
"""

__version__ = "0.1.0"
