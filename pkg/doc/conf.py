import pathlib
import sys

# put schurqnn on the path
sys.path.insert(0, str(pathlib.Path('..').resolve()))

# at large metadata
project = 'schurqnn'
copyright = '2026, the schurqnn developers'
author = 'the schurqnn developers'

# sphinx extensions to use
extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.mathjax',
]

# templates and theme
html_theme = 'sphinx_rtd_theme'

# autodoc config
autodoc_class_signature = 'separated'
autodoc_type_aliases = {
    # do not expand the Json and Matrix type aliases
    'Json': 'schurqnn._json.Json',
    'Matrix': 'schurqnn.linalg.Matrix',
}
