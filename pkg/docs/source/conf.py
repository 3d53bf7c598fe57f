"""Sphinx configuration file."""
# Configuration file for the Sphinx documentation builder.
#
# For the full list of built-in configuration values, see the documentation:
# https://www.sphinx-doc.org/en/master/usage/configuration.html

# -- Project information -----------------------------------------------------
# https://www.sphinx-doc.org/en/master/usage/configuration.html#project-information

import datetime
import sys
from pathlib import Path

source_path: Path = (Path(__file__).parent.parent.parent / "src").resolve()
bench_path: Path = source_path / "bench"
sys.path.insert(0, str(source_path))
sys.path.insert(0, str(bench_path))
for path in bench_path.rglob("*"):
    if path.is_dir():
        sys.path.insert(0, str(path))

project = "koofu-embeddings"
copyright: str = f"{datetime.datetime.now(tz=datetime.UTC).year}, koofu-embeddings developers"
author = "koofu-embeddings developers"
release = "0.1"

# -- General configuration ---------------------------------------------------
# https://www.sphinx-doc.org/en/master/usage/configuration.html#general-configuration

extensions: list[str] = [
    "sphinx.ext.autodoc",
    "sphinx.ext.viewcode",
    "sphinx.ext.napoleon",
    "sphinx_copybutton",
    "sphinx.ext.autosummary",
    "sphinx.ext.mathjax",
    "numpydoc",
]

# -- Options for HTML output -------------------------------------------------
# https://www.sphinx-doc.org/en/master/usage/configuration.html#options-for-html-output

html_theme = "pydata_sphinx_theme"
html_static_path: list[str] = []

# -- Options for numpydoc ----------------------------------------------------
# https://numpydoc.readthedocs.io/en/latest/format.html

numpydoc_class_members_toctree = False

# The name of the Pygments (syntax highlighting) style to use.
pygments_style = "sphinx"

html_theme_options = {
    "show_prev_next": False,
    "navbar_end": ["theme-switcher", "navbar-icon-links.html"],
}

html_sidebars = {
    "**": [],
}
html_context: dict[str, str] = {
    "default_mode": "auto",
}

html_title: str = f"{project} v{release} Manual"
html_last_updated_fmt = "%b %d, %Y"
