# Sphinx configuration for the hdfactors API docs.

import os
import sys

sys.path.insert(0, os.path.abspath(".."))


project = "hdfactors"
copyright = "2026, hdfactors developers"
author = "hdfactors developers"
release = "0.1.0"

extensions = ["sphinx.ext.autodoc", "sphinx.ext.napoleon"]
napoleon_google_docstring = True
autodoc_member_order = "bysource"
exclude_patterns = ["_build"]

html_theme = "alabaster"
