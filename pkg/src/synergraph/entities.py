"""Identity-unified registry of drugs, proteins, and diseases.

The store merges records that share an identifier, holds the pretrained
embedding attached to each entity, and optionally a chemical fingerprint per
drug.  It is mutable during ingestion only; call :meth:`EntityStore.freeze`
before handing it to graph construction, after which it is safe to share
across threads for reads.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Mapping, Optional

import numpy as np

from .errors import (
    DescriptorConflict,
    DimMismatch,
    KindConflict,
    LengthMismatch,
    MissingEmbedding,
    ParseError,
    StoreFrozen,
    UnknownEntity,
)

log = logging.getLogger(__name__)


class EntityKind(str, Enum):
    DRUG = "Drug"
    PROTEIN = "Protein"
    DISEASE = "Disease"

    @classmethod
    def parse(cls, token: str) -> "EntityKind":
        for kind in cls:
            if token.strip().lower() == kind.value.lower():
                return kind
        raise ValueError(f"unknown entity kind {token!r}")


#: Embedding widths produced by the upstream encoders, one per kind.
DEFAULT_DIMS: dict[EntityKind, int] = {
    EntityKind.DRUG: 2304,
    EntityKind.PROTEIN: 768,
    EntityKind.DISEASE: 512,
}

DEFAULT_FINGERPRINT_LEN = 2048


@dataclass(eq=False)
class Entity:
    """One identity-unified drug, protein, or disease."""

    id: str
    kind: EntityKind
    aliases: set[str] = field(default_factory=set)
    descriptor: Optional[str] = None


@dataclass(frozen=True)
class Embedding:
    """Dense real vector attached to an entity."""

    values: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class Fingerprint:
    """Fixed-length bit vector for a drug; source is 'ingested' or 'toy'."""

    bits: np.ndarray
    source: str = "ingested"

    @property
    def length(self) -> int:
        return int(self.bits.shape[0])

    @property
    def is_empty(self) -> bool:
        return int(self.bits.sum()) == 0

    def to_hex(self) -> str:
        """Big-endian hex encoding, 4 bits per character."""
        if self.length % 4 != 0:
            raise LengthMismatch("hex encoding requires a multiple-of-4 bit length")
        out = []
        for i in range(0, self.length, 4):
            nib = 0
            for b in self.bits[i : i + 4]:
                nib = (nib << 1) | int(b)
            out.append(format(nib, "x"))
        return "".join(out)


def fingerprint_from_hex(hexbits: str, source: str = "ingested") -> Fingerprint:
    """Decode a hex string into a Fingerprint of length ``4 * len(hexbits)``."""
    bits = np.zeros(4 * len(hexbits), dtype=np.uint8)
    for i, ch in enumerate(hexbits.strip().lower()):
        try:
            nib = int(ch, 16)
        except ValueError:
            raise ValueError(f"invalid hex character {ch!r}") from None
        for j in range(4):
            bits[4 * i + j] = (nib >> (3 - j)) & 1
    return Fingerprint(bits=bits, source=source)


def toy_fingerprint(smiles: str, length: int = DEFAULT_FINGERPRINT_LEN) -> Fingerprint:
    """Deterministic stand-in fingerprint: hash every 1..3-gram of the string.

    Stable across processes and platforms (keyed blake2b, not Python hash).
    The empty string maps to the all-zero vector.
    """
    if length <= 0:
        raise ValueError("fingerprint length must be positive")
    bits = np.zeros(length, dtype=np.uint8)
    for k in (1, 2, 3):
        for i in range(len(smiles) - k + 1):
            gram = smiles[i : i + k]
            digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
            bits[int.from_bytes(digest, "big") % length] = 1
    return Fingerprint(bits=bits, source="toy")


class EntityStore:
    """Registry with merge-on-shared-identifier semantics.

    Merge keys are primary ids and aliases.  A descriptor never merges two
    records with distinct identities on its own; instead such a collision
    raises :class:`DescriptorConflict`, as does attaching two different
    descriptors to one merged entity.
    """

    def __init__(
        self,
        dims: Optional[Mapping[EntityKind, int]] = None,
        fingerprint_len: int = DEFAULT_FINGERPRINT_LEN,
    ):
        self.dims = dict(DEFAULT_DIMS)
        if dims:
            self.dims.update(dims)
        self.fingerprint_len = fingerprint_len
        self._entities: list[Entity] = []
        self._order: dict[int, int] = {}  # id(entity) -> registration index
        self._by_key: dict[str, Entity] = {}  # primary ids and aliases
        self._by_descriptor: dict[tuple[EntityKind, str], Entity] = {}
        self._embeddings: dict[int, np.ndarray] = {}  # id(entity) -> vector
        self._fingerprints: dict[int, Fingerprint] = {}
        self._frozen = False

    # -- registration ---------------------------------------------------

    def register_entity(
        self,
        kind: EntityKind,
        primary_id: str,
        aliases: Iterable[str] = (),
        descriptor: Optional[str] = None,
    ) -> Entity:
        """Register a record, merging with any entity sharing an identifier.

        Returns the surviving entity.  All merge keys of the incoming record
        keep resolving to it afterwards.
        """
        self._check_mutable()
        if not primary_id:
            raise ValueError("primary_id must be nonempty")
        keys = {primary_id} | {a for a in aliases if a}

        for key in keys:
            bound = self._by_key.get(key)
            if bound is not None and bound.kind is not kind:
                raise KindConflict(
                    f"identifier {key!r} is already bound to kind {bound.kind.value}"
                )

        matches: list[Entity] = []
        for key in keys:
            bound = self._by_key.get(key)
            if bound is not None and bound not in matches:
                matches.append(bound)

        if descriptor:
            holder = self._by_descriptor.get((kind, descriptor))
            if holder is not None and holder not in matches:
                raise DescriptorConflict(
                    f"descriptor of {primary_id!r} already maps to {holder.id!r} "
                    "and the records share no identifier"
                )

        if not matches:
            entity = Entity(id=primary_id, kind=kind, aliases=set(keys - {primary_id}))
            self._entities.append(entity)
            self._order[id(entity)] = len(self._entities) - 1
            for key in keys:
                self._by_key[key] = entity
            if descriptor:
                entity.descriptor = descriptor
                self._by_descriptor[(kind, descriptor)] = entity
            return entity

        matches.sort(key=lambda e: self._order[id(e)])
        survivor = matches[0]
        for other in matches[1:]:
            self._absorb(survivor, other)
        # Fold the incoming record into the survivor.  The incoming primary id
        # keeps resolving to the survivor but does not join the alias set.
        survivor.aliases |= keys - {primary_id} - {survivor.id}
        for key in keys:
            self._by_key[key] = survivor
        if descriptor:
            if survivor.descriptor is not None and survivor.descriptor != descriptor:
                raise DescriptorConflict(
                    f"entity {survivor.id!r} already carries a different descriptor"
                )
            survivor.descriptor = descriptor
            self._by_descriptor[(kind, descriptor)] = survivor
        return survivor

    def _absorb(self, survivor: Entity, other: Entity) -> None:
        if survivor.descriptor and other.descriptor and survivor.descriptor != other.descriptor:
            raise DescriptorConflict(
                f"merge of {survivor.id!r} and {other.id!r} would join two descriptors"
            )
        survivor.aliases |= other.aliases
        survivor.aliases.discard(survivor.id)
        for key in {other.id} | other.aliases:
            self._by_key[key] = survivor
        if other.descriptor:
            survivor.descriptor = survivor.descriptor or other.descriptor
            self._by_descriptor[(other.kind, other.descriptor)] = survivor
        if id(other) in self._embeddings:
            self._embeddings.setdefault(id(survivor), self._embeddings.pop(id(other)))
        if id(other) in self._fingerprints:
            self._fingerprints.setdefault(id(survivor), self._fingerprints.pop(id(other)))
        self._entities.remove(other)
        del self._order[id(other)]

    # -- lookups ----------------------------------------------------------

    def resolve(self, token: str) -> Entity:
        entity = self._by_key.get(token)
        if entity is None:
            raise UnknownEntity(f"unknown entity identifier {token!r}")
        return entity

    def __contains__(self, token: str) -> bool:
        return token in self._by_key

    def entities(self, kind: Optional[EntityKind] = None) -> Iterator[Entity]:
        for entity in self._entities:
            if kind is None or entity.kind is kind:
                yield entity

    def __len__(self) -> int:
        return len(self._entities)

    def count(self, kind: EntityKind) -> int:
        return sum(1 for _ in self.entities(kind))

    # -- embeddings and fingerprints ---------------------------------------

    def attach_embedding(self, entity: Entity | str, values: np.ndarray | Embedding) -> None:
        """Attach (or overwrite) the embedding of an entity."""
        self._check_mutable()
        entity = self._as_entity(entity)
        if isinstance(values, Embedding):
            values = values.values
        vec = np.asarray(values, dtype=np.float64).reshape(-1)
        want = self.dims[entity.kind]
        if vec.shape[0] != want:
            raise DimMismatch(
                f"{entity.kind.value} {entity.id!r}: got dim {vec.shape[0]}, expected {want}"
            )
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"embedding of {entity.id!r} contains non-finite values")
        self._embeddings[id(entity)] = vec

    def embedding_of(self, entity: Entity | str) -> np.ndarray:
        entity = self._as_entity(entity)
        try:
            return self._embeddings[id(entity)]
        except KeyError:
            raise MissingEmbedding(f"entity {entity.id!r} has no embedding") from None

    def has_embedding(self, entity: Entity | str) -> bool:
        return id(self._as_entity(entity)) in self._embeddings

    def attach_fingerprint(self, entity: Entity | str, fp: Fingerprint) -> None:
        self._check_mutable()
        entity = self._as_entity(entity)
        if fp.length != self.fingerprint_len:
            raise LengthMismatch(
                f"fingerprint of {entity.id!r} has length {fp.length}, "
                f"store expects {self.fingerprint_len}"
            )
        if fp.is_empty:
            log.warning("fingerprint of %r has zero set bits", entity.id)
        self._fingerprints[id(entity)] = fp

    def fingerprint_of(self, entity: Entity | str) -> Optional[Fingerprint]:
        return self._fingerprints.get(id(self._as_entity(entity)))

    # -- lifecycle ----------------------------------------------------------

    def freeze(self) -> None:
        self._frozen = True

    @property
    def frozen(self) -> bool:
        return self._frozen

    def _check_mutable(self) -> None:
        if self._frozen:
            raise StoreFrozen("store is frozen; no further ingestion allowed")

    def _as_entity(self, entity: Entity | str) -> Entity:
        if isinstance(entity, Entity):
            return entity
        return self.resolve(entity)


# -- TSV ingestion ------------------------------------------------------------

ENTITIES_HEADER = "id\tkind\taliases\tdescriptor"
EMBEDDING_HEADER = "id\tvalues"
FINGERPRINT_HEADER = "id\thexbits"


def _read_rows(path, expected_header: str):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != expected_header:
        raise ParseError(path, 1, f"expected header {expected_header!r}")
    n_cols = expected_header.count("\t") + 1
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != n_cols:
            raise ParseError(path, line_no, f"expected {n_cols} columns, got {len(fields)}")
        yield line_no, fields


def load_entities_tsv(store: EntityStore, path) -> int:
    """Register every row of an entities TSV; returns the row count."""
    n = 0
    for line_no, (eid, kind_s, aliases_s, descriptor) in _read_rows(path, ENTITIES_HEADER):
        try:
            kind = EntityKind.parse(kind_s)
        except ValueError as exc:
            raise ParseError(path, line_no, str(exc)) from None
        aliases = {a.strip() for a in aliases_s.split(",") if a.strip()}
        store.register_entity(kind, eid.strip(), aliases, descriptor.strip() or None)
        n += 1
    return n


def load_embedding_table(
    store: EntityStore,
    path,
    kind: EntityKind,
    unknown_out: Optional[list[str]] = None,
) -> int:
    """Attach one embedding per row; returns the number attached.

    Rows whose id does not resolve are reported (logged, and appended to
    ``unknown_out`` when given) and skipped.  A row of the wrong width raises
    DimMismatch, aborting the load.
    """
    n = 0
    for line_no, (eid, values_s) in _read_rows(path, EMBEDDING_HEADER):
        eid = eid.strip()
        if eid not in store:
            log.warning("%s:%d: unknown id %r (skipped)", path, line_no, eid)
            if unknown_out is not None:
                unknown_out.append(eid)
            continue
        entity = store.resolve(eid)
        if entity.kind is not kind:
            raise ParseError(path, line_no, f"{eid!r} is a {entity.kind.value}, not {kind.value}")
        try:
            vec = np.array([float(v) for v in values_s.split(",")], dtype=np.float64)
        except ValueError as exc:
            raise ParseError(path, line_no, f"bad float: {exc}") from None
        try:
            store.attach_embedding(entity, vec)
        except DimMismatch as exc:
            raise DimMismatch(f"{path}:{line_no}: {exc}") from None
        n += 1
    return n


def load_fingerprints_tsv(
    store: EntityStore,
    path,
    unknown_out: Optional[list[str]] = None,
) -> int:
    """Attach one ingested fingerprint per row; returns the number attached."""
    n = 0
    for line_no, (eid, hexbits) in _read_rows(path, FINGERPRINT_HEADER):
        eid = eid.strip()
        if eid not in store:
            log.warning("%s:%d: unknown id %r (skipped)", path, line_no, eid)
            if unknown_out is not None:
                unknown_out.append(eid)
            continue
        try:
            fp = fingerprint_from_hex(hexbits)
        except ValueError as exc:
            raise ParseError(path, line_no, str(exc)) from None
        try:
            store.attach_fingerprint(eid, fp)
        except LengthMismatch as exc:
            raise LengthMismatch(f"{path}:{line_no}: {exc}") from None
        n += 1
    return n
