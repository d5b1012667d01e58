import numpy as np
import pytest
from hypothesis import given, strategies as st

from synergraph.entities import (
    EntityKind,
    EntityStore,
    fingerprint_from_hex,
    load_embedding_table,
    load_entities_tsv,
    load_fingerprints_tsv,
    toy_fingerprint,
)
from synergraph.errors import (
    DescriptorConflict,
    DimMismatch,
    KindConflict,
    ParseError,
    StoreFrozen,
    UnknownEntity,
)

TOY_DIMS = {EntityKind.DRUG: 8, EntityKind.PROTEIN: 6, EntityKind.DISEASE: 4}


class TestRegistration:
    def test_register_twice_is_idempotent(self):
        store = EntityStore(dims=TOY_DIMS)
        a = store.register_entity(EntityKind.DRUG, "D1", {"CHEMBL25"})
        b = store.register_entity(EntityKind.DRUG, "D1", {"CHEMBL25"})
        assert a is b
        assert len(store) == 1

    def test_alias_merge_unions_alias_sets(self):
        # Replay of the merge rule by hand: the shared alias links the two
        # records, final aliases are the union of the two alias sets.
        store = EntityStore(dims=TOY_DIMS)
        store.register_entity(EntityKind.DRUG, "D1", {"CHEMBL25"})
        merged = store.register_entity(EntityKind.DRUG, "D2", {"CHEMBL25", "DB00945"})
        assert len(store) == 1
        assert merged.id == "D1"
        assert merged.aliases == {"CHEMBL25", "DB00945"}
        # both primary ids keep resolving
        assert store.resolve("D2") is merged
        assert store.resolve("D1") is merged

    def test_alias_bound_to_other_kind_conflicts(self):
        store = EntityStore(dims=TOY_DIMS)
        store.register_entity(EntityKind.DISEASE, "Z1", {"MESH:123"})
        with pytest.raises(KindConflict):
            store.register_entity(EntityKind.PROTEIN, "P1", {"MESH:123"})

    def test_descriptor_alone_never_merges_distinct_ids(self):
        store = EntityStore(dims=TOY_DIMS)
        store.register_entity(EntityKind.DRUG, "D1", descriptor="CCO")
        with pytest.raises(DescriptorConflict):
            store.register_entity(EntityKind.DRUG, "D2", descriptor="CCO")

    def test_descriptor_with_shared_alias_merges(self):
        store = EntityStore(dims=TOY_DIMS)
        store.register_entity(EntityKind.DRUG, "D1", {"X"}, descriptor="CCO")
        merged = store.register_entity(EntityKind.DRUG, "D2", {"X"}, descriptor="CCO")
        assert merged.id == "D1"
        assert len(store) == 1

    def test_conflicting_descriptors_on_one_entity(self):
        store = EntityStore(dims=TOY_DIMS)
        store.register_entity(EntityKind.DRUG, "D1", descriptor="CCO")
        with pytest.raises(DescriptorConflict):
            store.register_entity(EntityKind.DRUG, "D1", descriptor="CCN")

    def test_same_descriptor_different_kind_is_fine(self):
        store = EntityStore(dims=TOY_DIMS)
        store.register_entity(EntityKind.DRUG, "D1", descriptor="MSE")
        store.register_entity(EntityKind.PROTEIN, "P1", descriptor="MSE")
        assert len(store) == 2

    def test_transitive_merge_of_two_existing_entities(self):
        store = EntityStore(dims=TOY_DIMS)
        store.register_entity(EntityKind.DRUG, "D1", {"a"})
        store.register_entity(EntityKind.DRUG, "D2", {"b"})
        bridge = store.register_entity(EntityKind.DRUG, "D3", {"a", "b"})
        assert len(store) == 1
        assert bridge.aliases == {"a", "b"}
        assert store.resolve("D1") is store.resolve("D2") is store.resolve("D3")

    def test_empty_primary_id_rejected(self):
        store = EntityStore(dims=TOY_DIMS)
        with pytest.raises(ValueError):
            store.register_entity(EntityKind.DRUG, "")

    def test_unknown_lookup(self):
        store = EntityStore(dims=TOY_DIMS)
        with pytest.raises(UnknownEntity):
            store.resolve("nope")

    @given(st.permutations(range(4)))
    def test_merge_order_independent_alias_partition(self, order):
        records = [
            ("A", {"x1"}),
            ("B", {"x1", "x2"}),
            ("C", {"y1"}),
            ("D", {"y1", "y2"}),
        ]
        store = EntityStore(dims=TOY_DIMS)
        for i in order:
            pid, aliases = records[i]
            store.register_entity(EntityKind.DRUG, pid, aliases)
        partitions = {frozenset(e.aliases) for e in store.entities()}
        assert partitions == {frozenset({"x1", "x2"}), frozenset({"y1", "y2"})}

    def test_alias_resolution_is_a_function(self):
        store = EntityStore(dims=TOY_DIMS)
        store.register_entity(EntityKind.DRUG, "D1", {"a", "b"})
        store.register_entity(EntityKind.DRUG, "D2", {"b", "c"})
        # every alias maps to exactly the merged entity
        ent = store.resolve("a")
        assert store.resolve("b") is ent
        assert store.resolve("c") is ent


class TestEmbeddings:
    def test_default_drug_dim_accepts_2304(self):
        store = EntityStore()
        e = store.register_entity(EntityKind.DRUG, "D1")
        store.attach_embedding(e, np.zeros(2304))
        assert store.embedding_of(e).shape == (2304,)

    def test_wrong_dim_rejected(self):
        store = EntityStore()
        e = store.register_entity(EntityKind.PROTEIN, "P1")
        with pytest.raises(DimMismatch):
            store.attach_embedding(e, np.zeros(512))

    def test_reattach_overwrites(self):
        store = EntityStore(dims=TOY_DIMS)
        e = store.register_entity(EntityKind.DRUG, "D1")
        store.attach_embedding(e, np.ones(8))
        second = np.arange(8, dtype=float)
        store.attach_embedding(e, second)
        np.testing.assert_array_equal(store.embedding_of(e), second)

    def test_every_stored_embedding_matches_kind_dim(self):
        store = EntityStore(dims=TOY_DIMS)
        rng = np.random.default_rng(0)
        for i in range(5):
            e = store.register_entity(EntityKind.DRUG, f"D{i}")
            store.attach_embedding(e, rng.normal(size=8))
        for e in store.entities():
            assert store.embedding_of(e).shape[0] == store.dims[e.kind]

    def test_frozen_store_rejects_mutation(self):
        store = EntityStore(dims=TOY_DIMS)
        e = store.register_entity(EntityKind.DRUG, "D1")
        store.freeze()
        with pytest.raises(StoreFrozen):
            store.register_entity(EntityKind.DRUG, "D2")
        with pytest.raises(StoreFrozen):
            store.attach_embedding(e, np.zeros(8))


class TestTsvLoading:
    def _store(self):
        store = EntityStore(dims=TOY_DIMS)
        for i in range(3):
            store.register_entity(EntityKind.PROTEIN, f"P{i}")
        return store

    def test_header_only_is_zero_rows(self, tmp_path):
        path = tmp_path / "emb.tsv"
        path.write_text("id\tvalues\n")
        assert load_embedding_table(self._store(), path, EntityKind.PROTEIN) == 0

    def test_three_valid_rows(self, tmp_path):
        path = tmp_path / "emb.tsv"
        rows = [f"P{i}\t" + ",".join(["0.5"] * 6) for i in range(3)]
        path.write_text("id\tvalues\n" + "\n".join(rows) + "\n")
        assert load_embedding_table(self._store(), path, EntityKind.PROTEIN) == 3

    def test_short_row_aborts_with_dim_mismatch(self, tmp_path):
        path = tmp_path / "emb.tsv"
        good = "P0\t" + ",".join(["0.1"] * 6)
        bad = "P1\t" + ",".join(["0.1"] * 5)
        path.write_text("id\tvalues\n" + good + "\n" + bad + "\n")
        with pytest.raises(DimMismatch) as err:
            load_embedding_table(self._store(), path, EntityKind.PROTEIN)
        assert ":3:" in str(err.value)

    def test_unknown_id_reported_not_fatal(self, tmp_path):
        path = tmp_path / "emb.tsv"
        path.write_text("id\tvalues\nNOPE\t" + ",".join(["0.1"] * 6) + "\n")
        unknown = []
        assert load_embedding_table(self._store(), path, EntityKind.PROTEIN, unknown_out=unknown) == 0
        assert unknown == ["NOPE"]

    def test_bad_header_is_parse_error(self, tmp_path):
        path = tmp_path / "emb.tsv"
        path.write_text("identifier\tvalues\n")
        with pytest.raises(ParseError):
            load_embedding_table(self._store(), path, EntityKind.PROTEIN)

    def test_entities_roundtrip(self, tmp_path):
        path = tmp_path / "entities.tsv"
        path.write_text(
            "id\tkind\taliases\tdescriptor\n"
            "D1\tDrug\tCHEMBL25,DB00945\tCCO\n"
            "P1\tProtein\t\t\n"
        )
        store = EntityStore(dims=TOY_DIMS)
        assert load_entities_tsv(store, path) == 2
        d = store.resolve("D1")
        assert d.aliases == {"CHEMBL25", "DB00945"}
        assert d.descriptor == "CCO"
        assert store.resolve("P1").kind is EntityKind.PROTEIN

    def test_fingerprint_tsv_roundtrip(self, tmp_path):
        store = EntityStore(dims=TOY_DIMS, fingerprint_len=16)
        store.register_entity(EntityKind.DRUG, "D1")
        fp = toy_fingerprint("CCO", 16)
        path = tmp_path / "fp.tsv"
        path.write_text(f"id\thexbits\nD1\t{fp.to_hex()}\n")
        assert load_fingerprints_tsv(store, path) == 1
        np.testing.assert_array_equal(store.fingerprint_of("D1").bits, fp.bits)


class TestToyFingerprint:
    def test_deterministic(self):
        a = toy_fingerprint("c1ccccc1O", 128)
        b = toy_fingerprint("c1ccccc1O", 128)
        np.testing.assert_array_equal(a.bits, b.bits)

    def test_empty_string_all_zero(self):
        fp = toy_fingerprint("", 64)
        assert fp.is_empty
        assert int(fp.bits.sum()) == 0

    def test_hundred_random_strings_pairwise_distinct(self):
        # Direct enumeration of the pairs: 20-char random strings should not
        # collide at 2048 bits.
        rng = np.random.default_rng(42)
        alphabet = list("CNOclnos=#()123456")
        strings = {"".join(rng.choice(alphabet, size=20)) for _ in range(100)}
        fps = {s: toy_fingerprint(s, 2048).bits for s in strings}
        items = sorted(fps)
        for i in range(len(items)):
            for j in range(i + 1, len(items)):
                assert not np.array_equal(fps[items[i]], fps[items[j]])

    def test_hex_roundtrip(self):
        fp = toy_fingerprint("CC(=O)N", 64)
        back = fingerprint_from_hex(fp.to_hex())
        np.testing.assert_array_equal(fp.bits, back.bits)
