"""Reduced dynamics of a qubit coupled to a bosonic environment via projected amplitudes."""

__version__ = "0.1.0"
