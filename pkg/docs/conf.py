# copyright ################################# #
# This file is part of the Xgam Package.      #
# Copyright (c) Xgam developers, 2024.        #
# ########################################### #

# Sphinx configuration of the Xgam documentation.

import os
import sys
from pathlib import Path

sys.path.insert(0, os.path.abspath(".."))

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.autosummary",
    "sphinx.ext.doctest",
    "sphinx.ext.mathjax",
    "sphinx.ext.napoleon",
]

templates_path = ["_templates"]
source_suffix = ".rst"
master_doc = "index"

project = "Xgam"
copyright = "2024, Xgam developers"

_version = {}
_version_file = Path(__file__).parents[1] / "xgam" / "_version.py"
exec(_version_file.read_text(), _version)
release = _version["__version__"]
version = ".".join(release.split(".")[:2])

exclude_patterns = ["_build"]
pygments_style = "sphinx"

# the compiled kernels are not needed to render the API
autodoc_mock_imports = ["cffi"]

html_theme = "default"
html_static_path = ["_static"]
htmlhelp_basename = "xgamdoc"

latex_documents = [
    ("index", "xgam.tex", "Xgam Documentation", "Xgam developers", "manual"),
]
man_pages = [("index", "xgam", "Xgam Documentation", ["Xgam developers"], 1)]
