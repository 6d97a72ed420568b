"""Implicit craniofacial modeling: landmark-anchored SDF ensembles, surgery
deformation fields, and the three-stage postoperative face prediction
pipeline, with a procedural synthetic-anatomy generator for desk-scale
ground truth."""

__version__ = "0.1.0"
