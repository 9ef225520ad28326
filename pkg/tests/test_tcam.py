import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import match_matrix
from tcamlsh.tcam import HW_288x512K, CapacityError, HardwareProfile, Match, TcamError, TcamTable
from tcamlsh.ternary import TernaryWord, decode_text, words_from_codes


def random_table(rng, n, w, star=0.3):
    C = rng.choice([0, 1, 2], size=(n, w), p=[(1 - star) / 2, (1 - star) / 2, star]).astype(np.int8)
    v, c = words_from_codes(C)
    t = TcamTable(w)
    t.program_planes(v, c, rng.permutation(n) + 1000)
    return t.freeze(), C


def word(codes):
    return TernaryWord.from_ternions(codes.tolist())


@given(st.sampled_from([1, 5, 64, 65, 288]), st.integers(0, 60), st.integers(0, 2**31), st.floats(0, 0.95))
@settings(max_examples=80, deadline=None)
def test_lookups_agree_with_positionwise_scan(w, n, seed, star):
    rng = np.random.default_rng(seed)
    t, C = random_table(rng, n, w, star)
    q = rng.choice([0, 1, 2], size=w, p=[0.35, 0.35, 0.3]).astype(np.int8)
    expected = np.flatnonzero(match_matrix(q, C)) if n else np.zeros(0, int)
    got = t.lookup_all(word(q))
    assert [m.address for m in got] == expected.tolist()
    assert [m.payload for m in got] == t.payloads[expected].tolist()
    first = t.lookup_first(word(q))
    assert (first is None) == (expected.size == 0)
    if first is not None:
        assert first == Match(int(expected[0]), int(t.payloads[expected[0]]))
    addr, pay = t.lookup_all_array(word(q))
    assert addr.tolist() == expected.tolist()


def test_stored_word_always_hits_itself():
    rng = np.random.default_rng(0)
    t, C = random_table(rng, 200, 288)
    for i in range(0, 200, 17):
        assert i in {m.address for m in t.lookup_all(word(C[i]))}


def test_priority_is_lowest_address():
    t = TcamTable(3)
    t.program(decode_text("1**"), 7)
    t.program(decode_text("10*"), 8)
    t.program(decode_text("***"), 9)
    assert t.lookup_first(decode_text("100")) == Match(0, 7)
    assert t.lookup_first(decode_text("000")) == Match(2, 9)
    assert [m.payload for m in t.lookup_all(decode_text("101"))] == [7, 8, 9]


def test_counters():
    t = TcamTable(2)
    t.program(decode_text("01"), 0)
    t.lookup_first(decode_text("01"))
    t.lookup_all(decode_text("11"))
    t.match_addresses(decode_text("01"))
    assert (t.lookups, t.hits, t.misses) == (2, 1, 1)


def test_segmented_lookup_is_one_lookup_with_per_block_keys():
    t = TcamTable(2)
    for text, p in [("00", 0), ("11", 1), ("00", 2), ("11", 3)]:
        t.program(decode_text(text), p)
    segs = [(0, 2, decode_text("11")), (2, 4, decode_text("00"))]
    assert t.lookup_first_segmented(segs) == Match(1, 1)
    segs = [(0, 2, decode_text("10")), (2, 4, decode_text("00"))]
    assert t.lookup_first_segmented(segs) == Match(2, 2)
    assert t.lookup_first_segmented([(0, 4, decode_text("10"))]) is None
    assert t.lookups == 3


def test_capacity_and_profile():
    t = TcamTable(4, capacity=2)
    t.program(decode_text("0000"), 0)
    t.program(decode_text("0000"), 1)
    with pytest.raises(CapacityError):
        t.program(decode_text("0000"), 2)
    with pytest.raises(TcamError):
        TcamTable(300, profile=HW_288x512K)
    small = TcamTable(8, profile=HardwareProfile(entries=1, width=8))
    small.program(TernaryWord.all_star(8), 0)
    with pytest.raises(CapacityError):
        small.program(TernaryWord.all_star(8), 1)


def test_frozen_and_width_checks():
    t = TcamTable(3)
    with pytest.raises(TcamError):
        t.program(decode_text("01"), 0)
    t.freeze()
    with pytest.raises(TcamError):
        t.program(decode_text("010"), 0)
    with pytest.raises(TcamError):
        t.lookup_first(decode_text("0101"))
    with pytest.raises(TcamError):
        TcamTable(-1)


def test_empty_table():
    t = TcamTable(10).freeze()
    assert t.lookup_first(TernaryWord.all_star(10)) is None
    assert t.lookup_all(TernaryWord.all_star(10)) == []
    assert TcamTable.from_bytes(t.to_bytes()).width == 10


def test_binary_round_trip_and_layout():
    rng = np.random.default_rng(3)
    t, _ = random_table(rng, 50, 77)
    blob = t.to_bytes()
    assert int.from_bytes(blob[:8], "little") == 77 and int.from_bytes(blob[8:16], "little") == 50
    back = TcamTable.from_bytes(blob)
    assert back.to_bytes() == blob
    for a in (0, 13, 49):
        assert back.entry(a) == t.entry(a)
    with pytest.raises(TcamError):
        TcamTable.from_bytes(blob[:-1])
    with pytest.raises(TcamError):
        TcamTable.from_bytes(blob[:10])


def test_file_and_text_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    t, _ = random_table(rng, 20, 9)
    t.save(tmp_path / "t.bin")
    assert TcamTable.load(tmp_path / "t.bin").to_bytes() == t.to_bytes()
    assert TcamTable.from_text(t.to_text()).to_bytes() == t.to_bytes()
    with pytest.raises(TcamError):
        TcamTable.from_text("")


def test_concurrent_queries_on_frozen_table():
    rng = np.random.default_rng(5)
    t, C = random_table(rng, 300, 128)
    queries = [word(C[i]) for i in range(40)]
    expected = [t.match_addresses(q).tolist() for q in queries]
    results = [None] * 4

    def worker(k):
        results[k] = [[m.address for m in t.lookup_all(q)] for q in queries]

    threads = [threading.Thread(target=worker, args=(k,)) for k in range(4)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    assert all(r == expected for r in results)
    assert t.lookups == 160
