from Crypto.Hash import SHA256, HMAC
import numpy as np

# Classes d'entités ayant chacune leur flux pseudo-aléatoire indépendant
POINTS = "points"
CAMERAS = "cameras"
DROPOUT = "dropout"
SPLATS = "splats"
SUBSETS = "subsets"


def seed_to_bytes(seed: int) -> bytes:
    """
    Encode une graine entière (éventuellement négative) sur 8 octets

    Args:
        seed: La graine de la configuration

    Returns:
        bytes: 8 octets big-endian en complément à deux
    """
    return (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "big")


def derive_stream_seed(seed: int, label: str, nbits: int = 128) -> int:
    """
    Dérive de manière déterministe la graine d'un flux nommé

    Même construction HMAC-DRBG que la génération déterministe de nonce de
    RFC 6979, avec la graine comme clé secrète et le nom du flux comme message.

    Args:
        seed: La graine maîtresse
        label: Le nom du flux (classe d'entités)
        nbits: La taille en bits de la graine dérivée

    Returns:
        int: La graine du flux
    """
    x = seed_to_bytes(seed)
    h1 = SHA256.new(label.encode("utf-8")).digest()

    v = b'\x01' * 32
    k = b'\x00' * 32

    k = HMAC.new(k, v + b'\x00' + x + h1, SHA256).digest()
    v = HMAC.new(k, v, SHA256).digest()
    k = HMAC.new(k, v + b'\x01' + x + h1, SHA256).digest()
    v = HMAC.new(k, v, SHA256).digest()

    t = b''
    while len(t) * 8 < nbits:
        v = HMAC.new(k, v, SHA256).digest()
        t += v

    ret = int.from_bytes(t, byteorder='big')
    if len(t) * 8 > nbits:
        ret = ret >> (len(t) * 8 - nbits)
    return ret


def stream(seed: int, label: str) -> np.random.Generator:
    """
    Générateur PCG64 (sortie 64 bits, algorithme fixe) dédié à un flux

    Deux flux de noms différents sont indépendants ; un même couple
    (graine, nom) produit la même suite sur toutes les plateformes.
    """
    return np.random.Generator(np.random.PCG64(derive_stream_seed(seed, label)))
