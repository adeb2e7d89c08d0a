"""shieldbridge: a deterministic simulator of a vault-collateralised
cross-chain bridge for a shielded currency, plus exact verification of the
amount-splitting privacy strategy it relies on."""

from .notes import (
    Address,
    Note,
    NoteCiphertext,
    NoteCommitment,
    Nullifier,
    SharedSecret,
    SharedSecretDirectory,
    commit_note,
    decrypt_note,
    derive_nullifier,
    derive_rcm,
    encrypt_note,
    verify_challenge,
)
from .oracle import RateFeed
from .protocol import Engine, ProtocolConfig, conformance_errors
from .relay import Relay
from .splitting import (
    PieceDistribution,
    SplitConfig,
    SplitResult,
    check_bounds,
    check_lemma1,
    exact_conditional_expectation,
    marginal_expectation,
    pieces_for_draw,
    posterior_pmf,
    posterior_ratio,
    prior_pmf,
    sample_prior,
    split,
)
from .vault_registry import RegistryParams, VaultRegistry
from .zcash_chain import ChainState, CommitmentTree, MerklePath, ShieldedTx, Wallet

__version__ = "0.1.0"

__all__ = [
    "Address", "ChainState", "CommitmentTree", "Engine", "MerklePath", "Note",
    "NoteCiphertext", "NoteCommitment", "Nullifier", "PieceDistribution",
    "ProtocolConfig", "RateFeed", "RegistryParams", "Relay", "SharedSecret",
    "SharedSecretDirectory", "ShieldedTx", "SplitConfig", "SplitResult",
    "VaultRegistry", "Wallet", "check_bounds", "check_lemma1", "commit_note",
    "conformance_errors", "decrypt_note", "derive_nullifier", "derive_rcm",
    "encrypt_note", "exact_conditional_expectation", "marginal_expectation",
    "pieces_for_draw", "posterior_pmf", "posterior_ratio", "prior_pmf",
    "sample_prior", "split", "verify_challenge",
]
