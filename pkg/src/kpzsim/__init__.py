"""Statevector simulation of discrete-time XXZ spin transport.

Submodules: ``qstate`` (amplitude kernels), ``gates`` (circuits), ``typicality``
(correlators), ``noisezne`` (noise and extrapolation), ``analysis`` (exponent
fits) and ``pipeline`` (config-driven runs, used by the ``simulate`` CLI).
"""

__version__ = "0.1.0"
