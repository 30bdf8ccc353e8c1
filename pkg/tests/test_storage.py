import numpy as np
import pytest

from ppqtraj import Config, summarize, summary_size_bytes
from ppqtraj.ingest import to_batches
from ppqtraj.query import Decoder
from ppqtraj.storage import (MAGIC, SECTIONS, FormatError, deserialize, load, save,
                             section_sizes, serialize, split_sections)

CONFIGS = [Config(), Config(partition_mode="autocorrelation"), Config(partition_mode="single"),
           Config(partition_mode="none"), Config(use_cqc=False),
           Config(use_cqc=False, codebook_bits=3)]


@pytest.fixture(scope="module", params=CONFIGS, ids=lambda c: f"{c.partition_mode}-"
                f"{'cqc' if c.use_cqc else 'nocqc'}-{c.codebook_bits}")
def summary(request, small_walk):
    s, _ = summarize(to_batches(small_walk), request.param)
    return s


def test_round_trip_is_exact(summary):
    buf = serialize(summary)
    back = deserialize(buf)
    assert back == summary
    assert serialize(back) == buf
    assert summary_size_bytes(summary) == len(buf)


def test_decoding_agrees_after_round_trip(summary):
    back = deserialize(serialize(summary))
    a, b = Decoder(summary), Decoder(back)
    for tid in list(summary.trajectories)[:5]:
        assert np.array_equal(a.full_replay(tid), b.full_replay(tid))


def test_sections_account_for_every_byte(summary):
    buf = serialize(summary)
    sizes = section_sizes(buf)
    assert list(sizes) == list(SECTIONS)
    assert sum(sizes.values()) + len(MAGIC) + 2 + 4 * len(SECTIONS) == len(buf)
    if not summary.config.use_cqc:
        assert sizes["cqc_codes"] == 0


def test_save_and_load(tmp_path, summary):
    path = tmp_path / "s.ppqt"
    n = save(summary, path)
    assert n == path.stat().st_size
    assert load(path) == summary


def test_serialization_is_deterministic(small_walk):
    a, _ = summarize(to_batches(small_walk), Config())
    b, _ = summarize(to_batches(small_walk), Config())
    assert serialize(a) == serialize(b)


def test_bad_inputs_raise_format_error(summary):
    buf = serialize(summary)
    with pytest.raises(FormatError):
        deserialize(b"NOPE" + buf[4:])
    with pytest.raises(FormatError):
        deserialize(buf[:4] + b"\x09\x00" + buf[6:])
    with pytest.raises(FormatError):
        deserialize(buf[:3])
    with pytest.raises(FormatError):
        deserialize(buf[:-1])
    with pytest.raises(FormatError):
        deserialize(buf + b"\x00")
    with pytest.raises(FormatError):
        split_sections(buf[: len(buf) // 2])


def test_corrupt_config_section_is_reported(summary):
    buf = bytearray(serialize(summary))
    # the config section starts right after the header and its length prefix
    buf[10] = ord("!")
    with pytest.raises(FormatError):
        deserialize(bytes(buf))


def test_corrupt_index_section_is_reported(summary):
    buf = serialize(summary)
    n = section_sizes(buf)["index"]
    assert n > 0
    # overwrite the index body but keep its length prefix
    with pytest.raises(FormatError):
        deserialize(buf[:-n] + b"\xff" * n)
