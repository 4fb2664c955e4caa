__version__ = "0.1.0"
__author__ = "jumpfisher contributors"
__email__ = "jumpfisher@users.noreply.github.com"
