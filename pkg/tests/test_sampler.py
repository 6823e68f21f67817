import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from ccnn import sampler as S


def test_checkered():
    s = S.checkered()
    assert s.mask.tolist() == [[1, 0], [0, 1]]
    assert s.n == 2 and s.k == 2
    assert S.is_n_rooks(s)
    assert S.samples_of(s) == [(0, 0), (1, 1)]


def test_complement():
    assert S.complement(S.checkered()).mask.tolist() == [[0, 1], [1, 0]]
    assert S.samples_of(S.complement(S.checkered())) == [(0, 1), (1, 0)]
    eye = S.Sampler(np.eye(3, dtype=int))
    assert S.complement(eye).mask.tolist() == [[0, 0, 1], [0, 1, 0], [1, 0, 0]]


def test_traditional():
    assert S.traditional(2).mask.tolist() == [[1, 0], [0, 0]]
    assert S.traditional(1).mask.tolist() == [[1]]
    assert S.traditional(3).n == 1
    assert not S.is_n_rooks(S.traditional(2))
    with pytest.raises(ValueError):
        S.traditional(0)


def test_complete():
    assert S.complete(2).n == 4
    assert S.complete(1) == S.traditional(1)
    assert S.complete(3).n == 9
    assert not S.is_n_rooks(S.complete(2))
    assert S.samples_of(S.complete(2)) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    with pytest.raises(ValueError):
        S.complete(-1)


def test_stride3_set_partitions_window():
    samplers = S.stride3_set()
    assert len(samplers) == 3
    assert all(s.n == 3 and s.k == 3 for s in samplers)
    assert all(S.is_n_rooks(s) for s in samplers)
    total = sum(s.mask.astype(int) for s in samplers)
    assert (total == 1).all()


def test_stride3_anti_diagonal_first():
    assert S.samples_of(S.stride3_set()[0]) == [(0, 2), (1, 1), (2, 0)]


@pytest.mark.parametrize("bad", [np.zeros((2, 2)), np.ones((2, 3)), np.array([[2, 0], [0, 1]]), np.ones((0, 0))])
def test_invalid_masks(bad):
    with pytest.raises(S.SamplerError):
        S.Sampler(bad)


def test_value_semantics():
    a = S.checkered()
    assert a == S.Sampler([[1, 0], [0, 1]])
    assert hash(a) == hash(S.Sampler([[1, 0], [0, 1]]))
    assert a != S.complement(a)
    with pytest.raises(ValueError):
        a.mask[0, 0] = 0


def test_registry():
    assert S.registry(2) == {0: S.checkered(), 1: S.complement(S.checkered())}
    assert list(S.registry(3)) == [0, 1, 2]
    with pytest.raises(S.SamplerError):
        S.registry(5)


masks = st.integers(1, 4).flatmap(
    lambda k: hnp.arrays(np.uint8, (k, k), elements=st.integers(0, 1)).filter(lambda m: m.any())
)


@given(masks)
def test_sample_count_matches_positions(mask):
    s = S.Sampler(mask)
    assert s.n == len(S.samples_of(s)) == int(mask.sum())
    assert 1 <= s.n <= s.k**2


@given(masks)
def test_complement_involution_preserves_n_and_rooks(mask):
    s = S.Sampler(mask)
    c = S.complement(s)
    assert S.complement(c) == s
    assert c.n == s.n
    assert S.is_n_rooks(c) == S.is_n_rooks(s)


@given(masks)
def test_n_rooks_forces_n_equals_k(mask):
    s = S.Sampler(mask)
    if S.is_n_rooks(s):
        assert s.n == s.k


@given(st.integers(1, 3).flatmap(lambda k: st.permutations(range(k))))
def test_permutation_matrices_are_n_rooks(perm):
    k = len(perm)
    mask = np.zeros((k, k), dtype=np.uint8)
    mask[np.arange(k), perm] = 1
    assert S.is_n_rooks(S.Sampler(mask))
