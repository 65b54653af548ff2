"""
Tourist daily trip chain analysis from cellphone stay records
"""
__version__ = "1.0.0"
