"""Published test vectors for every primitive in the profile.

Each check runs the profile's own wrapper (not the backing library directly)
and compares against the published bytes. ``check_all`` returns one
:class:`VectorResult` per vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from cryptography.hazmat.primitives.asymmetric import ec

from sudp import crypto_profile as cp
from sudp.crypto_profile import KeyRole, SymmetricKey

H = bytes.fromhex


@dataclass(frozen=True)
class VectorResult:
    name: str
    ok: bool
    detail: str


# SHA-256 (FIPS 180-4 examples)
SHA256 = [
    ("sha256/empty", b"", "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"),
    ("sha256/abc", b"abc", "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"),
]

# HKDF-SHA-256 (RFC 5869 A.1 and A.3)
HKDF = [
    ("hkdf/rfc5869-tc1", "0b" * 22, "000102030405060708090a0b0c", "f0f1f2f3f4f5f6f7f8f9", 42,
     "3cb25f25faacd57a90434f64d0362f2a2d2d0a90cf1a5a4c5db02d56ecc4c5bf34007208d5b887185865"),
    ("hkdf/rfc5869-tc3", "0b" * 22, "", "", 42,
     "8da4e775a563c18f715f802a063c5a31b8a11f5c5ee1879ec3454e5f3c738d2d9d201395faa4b61a96c8"),
]

# AES key wrap (RFC 3394 4.6: 256-bit key data under a 256-bit KEK)
KW = [
    ("aes-kw/rfc3394-4.6",
     "000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f",
     "00112233445566778899aabbccddeeff000102030405060708090a0b0c0d0e0f",
     "28c9f404c4b810f4cbccb35cfb87f8263f5786e2d80ed326cbc7f0e71a99f43bfb988b9b7a02dd21"),
]

# AES-256-GCM (McGrew-Viega test cases 15 and 16)
_GCM_KEY = "feffe9928665731c6d6a8f9467308308" * 2
_GCM_IV = "cafebabefacedbaddecaf888"
_GCM_P16 = ("d9313225f88406e5a55909c5aff5269a86a7a9531534f7da2e4c303d8a318a72"
            "1c3c0c95956809532fcf0e2449a6b525b16aedf5aa0de657ba637b39")
_GCM_C16 = ("522dc1f099567d07f47f37a32a84427d643a8cdcbfe5c0c97598a2bd2555d1aa"
            "8cb08e48590dbb3da7b08b1056828838c5f61e6393ba7a0abcc9f662")
GCM = [
    ("aes-256-gcm/tc15", _GCM_KEY, _GCM_IV, _GCM_P16 + "1aafd255", "",
     _GCM_C16 + "898015ad" + "b094dac5d93471bdec1a502270e3cc6c"),
    ("aes-256-gcm/tc16", _GCM_KEY, _GCM_IV, _GCM_P16, "feedfacedeadbeeffeedfacedeadbeefabaddad2",
     _GCM_C16 + "76fc6ece0f4e1768cddf8853bb2d551b"),
]

# ES256 deterministic signature (RFC 6979 A.2.5, P-256, SHA-256, "sample")
ES256 = {
    "x": "c9afa9d845ba75166b5c215767b1d6934e50c3db36e89b127b8a622b120f6721",
    "message": b"sample",
    "r": "efd48b2aacb6a8fd1140dd9cd45e81d69d2c877b56aaf991c34d0ea84eaf3716",
    "s": "f7cb1c942d657c41d436c7a1b6e29f65f3e900dbb9aff4064dc4ab2f843acda8",
}

# HPKE DHKEM(P-256, HKDF-SHA256), HKDF-SHA256, AES-128-GCM, base mode (RFC 9180 A.3.1)
HPKE = {
    "info": "4f6465206f6e2061204772656369616e2055726e",
    "ikmE": "4270e54ffd08d79d5928020af4686d8f6b7d35dbe470265f1f5aa22816ce860e",
    "ikmR": "668b37171f1072f3cf12ea8a236a45df23fc13b82af3609ad1e354f6ef817550",
    "pkRm": ("04fe8c19ce0905191ebc298a9245792531f26f0cece2460639e8bc39cb7f706a82"
             "6a779b4cf969b8a0e539c7f62fb3d30ad6aa8f80e30f1d128aafd68a2ce72ea0"),
    "enc": ("04a92719c6195d5085104f469a8b9814d5838ff72b60501e2c4466e5e67b325ac9"
            "8536d7b61a1af4b78e5b7f951c0900be863c403ce65c9bfcb9382657222d18c4"),
    "aad": "436f756e742d30",
    "pt": "4265617574792069732074727574682c20747275746820626561757479",
    "ct": ("5ad590bb8baa577f8619db35a36311226a896e7342a6d836d8b7bcd2f20b6c7f"
           "9076ac232e3ab2523f39513434"),
    "export_empty_32": "5e9bc3d236e1911d95e65b576a8a86d478fb827e8bdfe77b741b289890490d4d",
}


def _cmp(name: str, got: bytes, want: str) -> VectorResult:
    ok = got.hex() == want.lower()
    return VectorResult(name, ok, "match" if ok else f"got {got.hex()} want {want}")


def _sha256() -> list[VectorResult]:
    return [_cmp(n, bytes(cp.hash(m)), d) for n, m, d in SHA256]


def _hkdf() -> list[VectorResult]:
    return [_cmp(n, cp.hkdf(H(ikm), H(salt) if salt else None, H(info), L), okm)
            for n, ikm, salt, info, L, okm in HKDF]


def _kw() -> list[VectorResult]:
    out = []
    for n, kek, key, wrapped in KW:
        w = cp.wrap(SymmetricKey(H(kek), KeyRole.WRAP), SymmetricKey(H(key), KeyRole.STATE))
        out.append(_cmp(n, bytes(w), wrapped))
        back = cp.unwrap(SymmetricKey(H(kek), KeyRole.WRAP), H(wrapped))
        out.append(_cmp(n + "/unwrap", bytes(back), key))
    return out


def _gcm() -> list[VectorResult]:
    out = []
    for n, key, iv, pt, aad, ct in GCM:
        k = SymmetricKey(H(key), KeyRole.STATE)
        out.append(_cmp(n, cp.aead_seal(k, H(iv), H(pt), H(aad)), ct))
        out.append(_cmp(n + "/open", cp.aead_open(k, H(iv), H(ct), H(aad)), pt))
    return out


def _es256() -> list[VectorResult]:
    sk = ec.derive_private_key(int(ES256["x"], 16), ec.SECP256R1())
    sig = cp.sign(sk, ES256["message"], deterministic=True)
    res = [_cmp("es256/rfc6979-sample", sig, ES256["r"] + ES256["s"])]
    ok = cp.verify(cp.point_bytes(sk), ES256["message"], H(ES256["r"] + ES256["s"]))
    res.append(VectorResult("es256/rfc6979-sample/verify", ok, "match" if ok else "verify rejected"))
    return res


def _hpke() -> list[VectorResult]:
    suite = cp._SUITE
    v = HPKE
    recipient = cp.KemKeyPair.derive(H(v["ikmR"]))
    eph = suite.kem.derive_key_pair(H(v["ikmE"]))
    out = [_cmp("hpke/p256-a3.1/pkR", recipient.public, v["pkRm"]),
           _cmp("hpke/p256-a3.1/pkE", eph.public_key.to_public_bytes(), v["enc"])]
    pkr = suite.kem.deserialize_public_key(recipient.public)
    enc, ctx = suite.create_sender_context(pkr, info=H(v["info"]), eks=eph)
    out.append(_cmp("hpke/p256-a3.1/enc", enc, v["enc"]))
    out.append(_cmp("hpke/p256-a3.1/seal-seq0", ctx.seal(H(v["pt"]), aad=H(v["aad"])), v["ct"]))
    enc2, exported = cp.hpke_export(recipient.public, info=H(v["info"]), eks=eph)
    out.append(_cmp("hpke/p256-a3.1/export", exported, v["export_empty_32"]))
    out.append(_cmp("hpke/p256-a3.1/import", cp.hpke_import(recipient, enc2, info=H(v["info"])),
                    v["export_empty_32"]))
    return out


GROUPS: dict[str, Callable[[], list[VectorResult]]] = {
    "sha256": _sha256,
    "hkdf": _hkdf,
    "aes-kw": _kw,
    "aes-gcm": _gcm,
    "es256": _es256,
    "hpke": _hpke,
}


def check_all() -> list[VectorResult]:
    results = []
    for group, fn in GROUPS.items():
        try:
            results.extend(fn())
        except Exception as exc:  # a crashing check is a failed vector, not a crashed run
            results.append(VectorResult(f"{group}/error", False, f"{type(exc).__name__}: {exc}"))
    return results
