import threading

import numpy as np
import pytest

from synlike.rng import (
    RngStream,
    StreamScratch,
    chain_stream,
    data_stream,
    init_stream,
    likelihood_stream,
    penalty_stream,
    probe_stream,
    thread_local_scratch,
)


def test_same_stream_reproduces_exactly():
    s = likelihood_stream(123, 7).child(3)
    a = s.generator().standard_normal(64)
    b = s.generator().standard_normal(64)
    np.testing.assert_array_equal(a, b)


def test_distinct_streams_differ():
    gen = np.random.default_rng(0)
    for _ in range(20):
        seed = int(gen.integers(1 << 32))
        one = likelihood_stream(seed, 4).child(0).generator().standard_normal(8)
        two = likelihood_stream(seed, 4).child(1).generator().standard_normal(8)
        three = likelihood_stream(seed, 5).child(0).generator().standard_normal(8)
        assert not np.array_equal(one, two)
        assert not np.array_equal(one, three)


def test_master_seed_changes_every_stream():
    a = chain_stream(1).generator().standard_normal(8)
    b = chain_stream(2).generator().standard_normal(8)
    assert not np.array_equal(a, b)


def test_child_indexing():
    parent = likelihood_stream(9, 2)
    assert parent.stream_id & ((1 << 20) - 1) == 0
    kid = parent.child(5)
    assert kid.stream_id == parent.stream_id | 5
    assert kid.master_seed == parent.master_seed
    with pytest.raises(ValueError):
        kid.child(0)  # children are leaves, not batch parents
    with pytest.raises(ValueError):
        parent.child(-1)
    with pytest.raises(ValueError):
        parent.child(1 << 20)


def test_factory_streams_never_collide():
    ids = set()
    for factory in (chain_stream, probe_stream):
        ids.add(factory(0).stream_id)
    for block in range(50):
        ids.add(likelihood_stream(0, block).stream_id)
        ids.add(init_stream(0, block).stream_id)
        ids.add(penalty_stream(0, block).stream_id)
        ids.add(data_stream(0, block).stream_id)
    assert len(ids) == 2 + 4 * 50


def test_block_index_range_checked():
    with pytest.raises(ValueError):
        likelihood_stream(0, -1)
    with pytest.raises(ValueError):
        likelihood_stream(0, 1 << 36)


def test_stream_id_must_fit_64_bits():
    with pytest.raises(ValueError):
        RngStream(-1)
    with pytest.raises(ValueError):
        RngStream(0, 1 << 64)


def test_scratch_matches_fresh_generator_bitwise():
    scratch = StreamScratch()
    gen = np.random.default_rng(42)
    for _ in range(30):
        seed = int(gen.integers(1 << 64, dtype=np.uint64))
        iteration = int(gen.integers(1 << 20))
        child = int(gen.integers(1 << 10))
        stream = likelihood_stream(seed, iteration).child(child)
        fresh = stream.generator()
        reused = scratch.generator_for(stream)
        np.testing.assert_array_equal(
            reused.standard_normal(17), fresh.standard_normal(17)
        )
        np.testing.assert_array_equal(reused.uniform(size=5), fresh.uniform(size=5))
        np.testing.assert_array_equal(
            reused.integers(1 << 63, size=3), fresh.integers(1 << 63, size=3)
        )


def test_scratch_reset_forgets_previous_use():
    scratch = StreamScratch()
    stream = penalty_stream(7, 3).child(1)
    first = scratch.generator_for(stream).standard_normal(9)
    scratch.generator_for(data_stream(99)).standard_normal(1000)  # pollute state
    second = scratch.generator_for(stream).standard_normal(9)
    np.testing.assert_array_equal(first, second)


def test_thread_local_scratch_is_per_thread():
    main_scratch = thread_local_scratch()
    assert thread_local_scratch() is main_scratch
    seen = []

    def grab():
        seen.append(thread_local_scratch())

    t = threading.Thread(target=grab)
    t.start()
    t.join()
    assert seen[0] is not main_scratch
