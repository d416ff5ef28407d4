"""
Ergodicity experiments for two-noise evolution equations.

Modules:
- pullback: evolutionary systems of measures by pullback, consistency under shifts
- flow: the flow property P*_{s,t} mu_s = mu_t
- krylov: Krylov-Bogoliubov samples of the enlarged process and their invariance
- asf: asymptotic strong Feller diagnostic tables
- lyapunov: Lyapunov structure and return-time tails
- mixing: coupling-based mixing certificates
- small_ball: irreducibility and regularity probes
"""

from .asf import ASFEntry, ASFTable, asf_diagnostic
from .common import Observable, ZObservable, sigmoid_observables, start_spread
from .flow import FlowReport, check_flow_property, push_forward
from .krylov import InvarianceReport, ZSample, check_invariance, default_z_observables, krylov_bogoliubov
from .lyapunov import LyapunovConstants, LyapunovReport, fit_driver_moments, lyapunov_audit
from .mixing import MixingCertificate, mixing_certificate
from .pullback import ConsistencyReport, EvoSystemEstimate, check_consistency, estimate_evo_system
from .small_ball import (
    RegularityReport,
    SearchCapExceeded,
    SmallBallReport,
    find_k0,
    regularity_probe,
    small_ball_probe,
)

__all__ = [
    "ASFEntry",
    "ASFTable",
    "ConsistencyReport",
    "EvoSystemEstimate",
    "FlowReport",
    "InvarianceReport",
    "LyapunovConstants",
    "LyapunovReport",
    "MixingCertificate",
    "Observable",
    "RegularityReport",
    "SearchCapExceeded",
    "SmallBallReport",
    "ZObservable",
    "ZSample",
    "asf_diagnostic",
    "check_consistency",
    "check_flow_property",
    "check_invariance",
    "default_z_observables",
    "estimate_evo_system",
    "find_k0",
    "fit_driver_moments",
    "krylov_bogoliubov",
    "lyapunov_audit",
    "mixing_certificate",
    "push_forward",
    "regularity_probe",
    "sigmoid_observables",
    "small_ball_probe",
    "start_spread",
]
