import numpy as np
import pytest

from focus_splat.errors import ConfigError, FormatError
from focus_splat.io_utils.binary import ByteReader, pack
from focus_splat.io_utils.textfiles import (
    atomic_write, format_key_values, parse_bool, parse_key_values, parse_vector, read_name_list, write_name_list,
)


def test_byte_reader_sequence():
    data = pack("Qi", 7, -3) + b"view_0001.png\x00" + np.arange(3, dtype="<f8").tobytes()
    reader = ByteReader(data, "images.bin")
    assert reader.u64() == 7
    assert reader.unpack("i") == (-3,)
    assert reader.cstring() == b"view_0001.png"
    assert reader.array("<f8", 3).tolist() == [0.0, 1.0, 2.0]
    reader.expect_end()


def test_byte_reader_truncated():
    reader = ByteReader(pack("I", 1), "cameras.bin")
    with pytest.raises(FormatError, match="cameras.bin: flux tronqué"):
        reader.u64()


def test_byte_reader_unterminated_name():
    with pytest.raises(FormatError):
        ByteReader(b"abc").cstring()


def test_byte_reader_trailing_bytes():
    reader = ByteReader(pack("II", 1, 2))
    reader.unpack("I")
    with pytest.raises(FormatError, match="4 octets en trop"):
        reader.expect_end()


def test_parse_key_values():
    text = "# commentaire\n\nseed: 3\nlayout :  ring \n"
    assert parse_key_values(text) == [(3, "seed", "3"), (4, "layout", "ring")]


@pytest.mark.parametrize("text, line", [
    ("seed 3\n", 1),
    ("seed: 1\n: 2\n", 2),
    ("seed: 1\nlayout: ring\nseed: 2\n", 3),
])
def test_parse_key_values_errors(text, line):
    with pytest.raises(ConfigError) as info:
        parse_key_values(text)
    assert info.value.line == line


def test_format_key_values():
    text = format_key_values([("n_in", 6990), ("ratio", 0.1), ("baselines", True)])
    assert text == "n_in: 6990\nratio: 0.1\nbaselines: true\n"


def test_parse_bool_and_vector():
    assert parse_bool("Yes") is True
    assert parse_bool("0") is False
    with pytest.raises(ConfigError):
        parse_bool("oui")
    assert parse_vector("1, 2 3.5") == (1.0, 2.0, 3.5)
    with pytest.raises(ConfigError):
        parse_vector("1 2")
    with pytest.raises(ConfigError):
        parse_vector("1 deux 3")


def test_name_list_and_atomic_write(tmp_path):
    path = tmp_path / "sous" / "liste.txt"
    write_name_list(path, ["b.png", "a.png"])
    assert path.read_bytes() == b"b.png\na.png\n"
    assert read_name_list(path) == ["b.png", "a.png"]
    atomic_write(path, [b"x", "y\n"])
    assert path.read_bytes() == b"xy\n"
    # aucun fichier temporaire laissé dans le dossier
    assert [p.name for p in path.parent.iterdir()] == ["liste.txt"]


def test_atomic_write_with_writer(tmp_path):
    path = tmp_path / "sortie.bin"
    atomic_write(path, lambda handle: handle.write(b"\x01\x02"))
    assert path.read_bytes() == b"\x01\x02"

    def failing(handle):
        handle.write(b"partiel")
        raise OSError("disque plein")

    with pytest.raises(OSError):
        atomic_write(path, failing)
    assert path.read_bytes() == b"\x01\x02"
    assert [p.name for p in tmp_path.iterdir()] == ["sortie.bin"]
