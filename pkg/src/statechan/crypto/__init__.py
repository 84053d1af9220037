from .commitment import Commitment, Opening, commit, verify_open
from .codec import encode
from .group import G, ORDER, Point, hash_to_curve
from .multisig import (
    AggregateSignature,
    MissingShare,
    SigningShare,
    multi_keygen,
    multi_sign,
    multi_verify,
)
from .nizk import EqualityProof, NizkError, nizk_prove, nizk_verify
from .signatures import MalformedKey, SigKeyPair, keygen, party_keys, sign, verify

__all__ = [
    "AggregateSignature", "Commitment", "EqualityProof", "G", "MalformedKey",
    "MissingShare", "NizkError", "ORDER", "Opening", "Point", "SigKeyPair",
    "SigningShare", "commit", "encode", "hash_to_curve", "keygen",
    "multi_keygen", "multi_sign", "multi_verify", "nizk_prove", "nizk_verify",
    "party_keys", "sign", "verify", "verify_open",
]
