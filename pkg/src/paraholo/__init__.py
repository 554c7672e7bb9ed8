"""Parametric holomorphy of Helmholtz solution operators.

Numerical toolkit for the 1-d model problem on (0, 2): P1 finite elements,
solution-operator norm estimation, guaranteed holomorphy polydiscs, pole
computation in the parameter, and the mode-wise 2-d DtN symbol.
"""

__version__ = "0.1.0"
