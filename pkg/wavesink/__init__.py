# Waveguide absorber toolkit
__version__ = "1.0.0"