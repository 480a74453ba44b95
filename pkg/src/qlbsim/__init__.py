"""Heralded quantum lattice-Boltzmann simulator.

Submodules:

``collision``    two-unitary decomposition of collision operators
``lbm``          classical D2Q4 advection-diffusion reference solver
``bosonic``      truncated bosonic mode, Hermite functions, wavepackets
``spin``         two-pseudospin streaming operators and gates
``hybrid``       pseudospin-boson statevector and conditional displacements
``protocol``     heralded collision plus streaming steps
``experiments``  figure tables and quantum/classical comparison
"""
from .collision import (
    CollisionOperator,
    GammaWindow,
    GeneratorMatrix,
    SplitSchedule,
    UnitarySumDecomposition,
    build_collision,
    decompose,
    failure_bound,
    gamma_window,
    optimal_gamma,
    split_schedule,
    success_curve,
)
from .hybrid import HybridState, Wavepacket, encode_state, extract_field
from .lbm import LatticeField, TransportModel
from .protocol import HeraldRecord, full_step, lcu_apply, run_protocol

__version__ = "0.1.0"
