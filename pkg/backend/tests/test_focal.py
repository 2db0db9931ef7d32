import pytest

from app.libs.focal import FocalQueue


def test_focal_pops_best_admitted_item():
    queue = FocalQueue(lambda lowest: 2 * lowest)
    queue.push("a", 5, 5, 3)
    queue.push("b", 6, 9, 0)
    queue.push("c", 7, 11, 1)

    assert queue.pop() == "b"
    assert queue.last_min_anchor == 5
    assert not queue.last_from_anchor
    assert queue.pop() == "a"
    # "c" is only admitted once the anchor minimum rises to 7
    assert queue.pop() == "c"
    assert queue.last_min_anchor == 7
    assert not queue


def test_falls_back_to_anchor_minimum():
    queue = FocalQueue(lambda lowest: lowest)
    queue.push("x", 3, 4, 0)
    queue.push("y", 5, 6, 0)
    assert queue.pop() == "x"
    assert queue.last_from_anchor
    assert len(queue) == 1


def test_ties_keep_insertion_order():
    queue = FocalQueue(lambda lowest: lowest)
    for name in "pqr":
        queue.push(name, 1, 1, (0, 1))
    assert [queue.pop() for _ in range(3)] == ["p", "q", "r"]


def test_discard():
    queue = FocalQueue(lambda lowest: lowest)
    entry = queue.push("gone", 1, 1, 0)
    queue.push("kept", 2, 2, 0)
    queue.discard(entry)
    queue.discard(entry)
    assert len(queue) == 1
    assert queue.min_anchor() == 2
    assert queue.pop() == "kept"
    with pytest.raises(IndexError):
        queue.pop()
