import hashlib
import random
from pathlib import Path

import pytest

from jxlmod import brotli_io
from jxlmod.bitio import BitReader, BitWriter
from jxlmod.errors import IllFormed
from jxlmod.icc import decode_icc, decode_icc_stream, predict_header_byte, shuffle, unshuffle
from jxlmod.refcodec.icc import encode_icc, encode_icc_stream

FIXTURE = Path(__file__).parent / "fixtures" / "app2_icc_template.bin"


def fixture_profile():
    raw = FIXTURE.read_bytes()
    assert hashlib.md5(raw).hexdigest().upper() == "C02BFC5B3730AC5B6E26C943ACC0F651"
    return raw[17:]


def pil_profiles():
    ImageCms = pytest.importorskip("PIL.ImageCms")
    return [ImageCms.ImageCmsProfile(ImageCms.createProfile(n)).tobytes()
            for n in ("sRGB", "LAB", "XYZ")]


def _stream(size, cmd, data):
    def v(n):
        out = bytearray()
        while n > 127:
            out.append(128 | n & 127)
            n >>= 7
        out.append(n)
        return bytes(out)
    return v(size) + v(len(cmd)) + bytes(cmd) + bytes(data)


@pytest.mark.parametrize("i,want", [(8, 4), (70, 246), (71, 214), (73, 1), (78, 211), (79, 45)])
def test_fixed_header_predictions(i, want):
    assert predict_header_byte(i, bytearray(128), 500) == want


def test_header_predictions_context():
    out = bytearray(128)
    assert [predict_header_byte(i, out, 0x01020304) for i in range(4)] == [1, 2, 3, 4]
    out[40:42] = b"AP"
    assert bytes(predict_header_byte(i, out, 0) for i in (41, 42, 43)) == b"PPL"
    out[40:42] = b"SG"
    assert bytes(predict_header_byte(i, out, 0) for i in (42, 43)) == b"I "
    out[4:8] = b"abcd"
    assert bytes(predict_header_byte(i, out, 0) for i in range(80, 84)) == b"abcd"
    assert bytes(predict_header_byte(i, out, 0) for i in range(36, 40)) == b"acsp"


def test_shuffle_example():
    assert shuffle(bytes([1, 2, 3, 4]), 2) == bytes([1, 3, 2, 4])
    for n in range(0, 40):
        x = bytes(range(n))
        for w in (2, 4):
            assert unshuffle(shuffle(x, w), w) == x
            if n % w == 0 and n:
                assert shuffle(shuffle(x, w), n // w) == x


def test_type_signature_command():
    base = bytearray(128)
    for i in range(128):
        base[i] = predict_header_byte(i, base, 136)
    out = decode_icc_stream(_stream(136, [0, 16], bytes(128)))
    assert out[128:] == b"XYZ " + bytes(4)
    assert out[:128] == bytes(base)


def test_header_only_with_leftovers():
    assert len(decode_icc_stream(_stream(100, b"", bytes(100)))) == 100
    with pytest.raises(IllFormed):
        decode_icc_stream(_stream(100, b"", bytes(101)))
    with pytest.raises(IllFormed):
        decode_icc_stream(_stream(100, b"\x01", bytes(100)))


def test_truncated_stream():
    prof = fixture_profile()
    s = encode_icc_stream(prof, structured=True)
    for cut in (1, 2, 50, len(s) // 2, len(s) - 1):
        with pytest.raises(IllFormed):
            decode_icc_stream(s[:cut])


def test_predictor_command_errors():
    data = bytes(128) + bytes(8)
    with pytest.raises(IllFormed):  # width 3
        decode_icc_stream(_stream(140, [0, 4, 2, 4], data))
    with pytest.raises(IllFormed):  # order 3
        decode_icc_stream(_stream(140, [0, 4, 12, 4], data))
    with pytest.raises(IllFormed):  # stride reaching before the output start
        decode_icc_stream(_stream(140, [0, 4, 16, 40, 4], data))
    with pytest.raises(IllFormed):  # unknown command
        decode_icc_stream(_stream(140, [0, 9], data))


def test_fixture_minimal_and_structured():
    prof = fixture_profile()
    assert len(prof) == 3144
    for structured in (False, True):
        assert decode_icc_stream(encode_icc_stream(prof, structured)) == prof


def test_real_profiles_roundtrip():
    for prof in pil_profiles():
        for structured in (False, True):
            assert decode_icc_stream(encode_icc_stream(prof, structured)) == prof


def test_random_bytes_roundtrip():
    rnd = random.Random(5)
    for n in (1, 5, 127, 128, 129, 300, 1000):
        prof = bytes(rnd.randrange(256) for _ in range(n))
        for structured in (False, True):
            assert decode_icc_stream(encode_icc_stream(prof, structured)) == prof


def test_bitstream_embedding():
    prof = fixture_profile()
    w = BitWriter()
    w.write(3, 5)
    encode_icc(w, prof, True)
    w.write(8, 0xAB)
    r = BitReader(w.getvalue())
    r.u(3)
    assert decode_icc(r) == prof
    assert r.u(8) == 0xAB


def test_varint_overflow_in_brotli_payload():
    w = BitWriter()
    w.write_bytes(brotli_io.compress(b"\xff" * 12))
    with pytest.raises(IllFormed):
        decode_icc(BitReader(w.getvalue()))
