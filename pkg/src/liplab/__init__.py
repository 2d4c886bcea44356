"""Video-to-speech reconstruction through an auditory spectrogram bottleneck."""

__version__ = "0.1.0"
