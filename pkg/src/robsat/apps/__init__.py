"""Command line, model files and the experiment drivers."""
