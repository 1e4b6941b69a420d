"""Motion planning for a formation of mobile manipulators carrying one rigid object."""

__version__ = "0.1.0"
