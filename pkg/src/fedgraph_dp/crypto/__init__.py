from .dpsu import DPSU_MODES, DPSUTrace, InProcessChannel, WireChannel, dpsu_collect_graph
from .elgamal import (
    BitCiphertext,
    CorruptCiphertextError,
    DecryptionError,
    JointPublicKey,
    KeyShare,
    MissingShareError,
    combine,
    decode_ciphertexts,
    encode_ciphertexts,
    encrypt_bit,
    keygen,
    partial_decrypt,
    rerandomize,
)
from .groups import REFERENCE_GROUP, Ed25519Group, GroupBackend, SchnorrGroup, available_groups, get_group
