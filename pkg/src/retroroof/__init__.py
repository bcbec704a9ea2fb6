"""Rooftop detection from degraded grayscale aerial imagery.

Pipeline stages: GAN colorization, GAN super-resolution, footprint-derived
COCO dataset generation, single-stage detector training, and variant
evaluation, plus an annotation review service.
"""

__version__ = "0.1.0"
