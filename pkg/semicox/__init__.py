"""Top-level package for semicox."""

__author__ = """ASI Uniovi"""
__email__ = 'joaquin@uniovi.es'
__version__ = '0.1.0'
