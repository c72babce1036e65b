"""Proactive lightweight authentication protocols with an adversarial channel simulator."""

from .ap1 import Ap1TagState, Ap1Verifier, Ap1VerifierState
from .ap2 import Ap2TagState, Ap2Verifier, Ap2VerifierState
from .ap2_iima import Ap2tTag, Ap2tVerifier, FrameLayout, compute_security_bound
from .channel import AdversaryKind, AdversaryModel, ConfigurationError, build_listening_pattern, run_sessions
from .core import (
    Bits,
    FramingError,
    KeyMessage,
    Protocol,
    ProtocolError,
    ProtocolParams,
    RefreshVector,
    SecretVector,
    Verdict,
    VerdictMessage,
    decode_message,
    encode_message,
)
from .harness import ExperimentConfig, ExperimentResult, PairRegistry, load_configs, run_experiment
from .padstream import PadStream, derive_subseeds
from .refresh import RefreshPolicy, audit_deterministic_schedule, coverage_probability

__version__ = "0.1.0"
