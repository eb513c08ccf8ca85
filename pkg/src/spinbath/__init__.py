"""Path-integral dynamics of a dissipative qubit.

A qubit couples to an Ohmic bath either directly or through an
intermediate damped oscillator. The reduced density matrix is propagated
with a memory-truncated tensor scheme, and decoherence and relaxation
times are read off the trajectories.
"""

__version__ = "0.1.0"
