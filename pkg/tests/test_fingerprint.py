import pytest

from parachute.fingerprint import (
    BytePartition,
    co_clusters_case_pairs,
    fingerprint,
    fingerprint_column,
    mask_matches,
    pattern_mask,
    round_robin_partition,
)
from parachute.predicates import like


def test_fingerprint_bitstring():
    partition = BytePartition.from_groups({0: "aeu", 2: "lnt"}, 4)
    assert fingerprint(partition, "nutella").to_bitstring() == "1010"
    assert fingerprint(partition, "").mask == 0


def test_like_pattern_prefilter():
    partition = BytePartition.from_groups({0: "u", 1: "tone"}, 4)
    pmask = pattern_mask(partition, "%utn%")
    assert mask_matches(fingerprint(partition, "utn"), pmask)
    assert mask_matches(fingerprint(partition, "nutella"), pmask)
    assert not mask_matches(fingerprint(partition, "tone"), pmask)


@pytest.mark.parametrize("value,pattern", [
    ("sequel", "%sequel%"),
    ("the sequel returns", "%sequel%"),
    ("abc", "a_c"),
    ("héllo", "h%o"),
    ("", "%"),
])
def test_matching_strings_cover_the_pattern_mask(value, pattern):
    assert like(value, pattern)
    for pbw in (1, 3, 8, 13):
        partition = round_robin_partition(pbw)
        assert mask_matches(fingerprint(partition, value), pattern_mask(partition, pattern))


def test_round_robin_every_cluster_used():
    partition = round_robin_partition(8)
    assert set(partition.cluster_of) == set(range(8))
    assert partition.strategy == "round-robin"


def test_partition_validation():
    with pytest.raises(ValueError):
        BytePartition(tuple([0] * 256), 2)
    with pytest.raises(ValueError):
        BytePartition(tuple([0] * 255), 1)


def test_case_pairs():
    assert not co_clusters_case_pairs(BytePartition.from_groups({0: "a", 1: "A"}, 2))
    assert co_clusters_case_pairs(round_robin_partition(1))
    # cases differ by 32, so widths dividing 32 keep pairs together
    assert co_clusters_case_pairs(round_robin_partition(8))
    assert not co_clusters_case_pairs(round_robin_partition(3))


def test_ilike_mask_uses_both_cases():
    partition = round_robin_partition(1)
    assert pattern_mask(partition, "%ab%", case_insensitive=True).mask == 1
    # 'k' is also the lowercase of the Kelvin sign, so it contributes nothing
    assert pattern_mask(partition, "%k%", case_insensitive=True).mask == 0


def test_fingerprint_column_nulls():
    partition = round_robin_partition(4)
    masks = fingerprint_column(partition, ["ab", None, "ab"])
    assert masks[1] == 0
    assert masks[0] == masks[2] == fingerprint(partition, "ab").mask


def test_partition_dict_roundtrip():
    partition = BytePartition.from_groups({0: "xyz"}, 5)
    assert BytePartition.from_dict(partition.to_dict()) == partition
