import pytest

from audita.core.exceptions import DecodeException, ParameterException
from audita.utils.chunking import FileChunker, split_blocks
from audita.utils.encoding import Decoder, Encoder, from_hex, int_to_bytes


def test_chunk_pads_last_chunk():
    chunked = FileChunker(4).chunk_bytes(b"abcdefghij")
    assert chunked.n == 3
    assert chunked.chunks[-1] == b"ij\x00\x00"
    assert all(len(chunk) == 4 for chunk in chunked.chunks)
    assert chunked.file_length == 10
    assert b"".join(chunked.chunks)[:chunked.file_length] == b"abcdefghij"


def test_exact_multiple_has_no_padding_chunk():
    chunked = FileChunker(5).chunk_bytes(b"0123456789")
    assert chunked.n == 2


def test_empty_file_is_rejected():
    with pytest.raises(ParameterException):
        FileChunker(4).chunk_bytes(b"")


def test_chunk_size_must_be_positive():
    with pytest.raises(ParameterException):
        FileChunker(0)


def test_split_blocks():
    assert split_blocks(b"\x01\x02\x03", 2, 2) == [0x0102, 0x0300]
    with pytest.raises(ParameterException):
        split_blocks(b"\x00" * 5, 2, 2)


def test_encoder_decoder_fields():
    data = Encoder().uint(7, 2).field(b"abc").bigint(1 << 70).flag(True).getvalue()
    decoder = Decoder(data)
    assert decoder.uint(2) == 7
    assert decoder.field() == b"abc"
    assert decoder.bigint() == 1 << 70
    assert decoder.flag() is True
    decoder.finish()


def test_decoder_rejects_truncated_and_trailing_input():
    data = Encoder().field(b"abcdef").getvalue()
    with pytest.raises(DecodeException):
        Decoder(data[:-1]).field()
    decoder = Decoder(data + b"\x00")
    decoder.field()
    with pytest.raises(DecodeException):
        decoder.finish()


def test_decoder_rejects_bad_flag():
    with pytest.raises(DecodeException):
        Decoder(b"\x02").flag()


def test_int_to_bytes_width():
    assert int_to_bytes(1, 4) == b"\x00\x00\x00\x01"
    assert int_to_bytes(0) == b""
    with pytest.raises(ValueError):
        int_to_bytes(-1)


def test_from_hex_errors():
    assert from_hex(" 0a0b ") == b"\x0a\x0b"
    with pytest.raises(DecodeException):
        from_hex("zz")
