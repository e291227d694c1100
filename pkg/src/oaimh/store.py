"""Record storage: items with datestamps, soft deletes and per-format payloads.

Two implementations share one contract: an in-memory store (fixtures, tests)
and a single-file XML catalog for durable use. Readers always see either the
pre- or post-upsert catalog, never a torn state.
"""

from __future__ import annotations

import os
import threading
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional
from xml.sax.saxutils import escape, quoteattr

from .model import (
    DC_SCHEMA_URL,
    Datestamp,
    ItemIdentifier,
    MetadataFormatDescriptor,
    RecordHeader,
    datestamp_parse,
)


class NotFound(KeyError):
    pass


class UnknownFormat(ValueError):
    pass


@dataclass(frozen=True)
class StoredItem:
    """One item: identifier, datestamp of last modification, payloads by prefix.

    Deleted items keep the datestamp of their deletion so incremental
    harvesters learn of deletions; they carry no payloads.
    """

    identifier: ItemIdentifier
    datestamp: Datestamp
    deleted: bool = False
    payloads: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if self.deleted and self.payloads:
            raise ValueError("deleted items cannot carry payloads")

    def payload(self, prefix: str) -> Optional[str]:
        for p, fragment in self.payloads:
            if p == prefix:
                return fragment
        return None

    def prefixes(self) -> list[str]:
        return [p for p, _ in self.payloads]

    def header(self) -> RecordHeader:
        return RecordHeader(self.identifier, self.datestamp, self.deleted)


class MemoryStore:
    """In-memory catalog of items plus the repository's format list."""

    def __init__(
        self,
        formats: Iterable[MetadataFormatDescriptor] = (),
        items: Iterable[StoredItem] = (),
    ):
        self._formats: list[MetadataFormatDescriptor] = list(formats)
        self._items: dict[str, StoredItem] = {}
        self._lock = threading.Lock()
        for item in items:
            self.upsert_item(item)

    @property
    def formats(self) -> list[MetadataFormatDescriptor]:
        return list(self._formats)

    def format_for_prefix(self, prefix: str) -> Optional[MetadataFormatDescriptor]:
        for fmt in self._formats:
            if fmt.prefix == prefix:
                return fmt
        return None

    def get_item(self, identifier: ItemIdentifier) -> StoredItem:
        """Look up one item; deleted items are returned (their headers are
        still disseminated)."""
        try:
            return self._items[identifier.value]
        except KeyError:
            raise NotFound(identifier.value) from None

    def ids_by_date(
        self,
        from_date: Optional[Datestamp] = None,
        until_date: Optional[Datestamp] = None,
    ) -> list[RecordHeader]:
        """All headers (including deleted) with from <= datestamp <= until,
        ordered by (datestamp, identifier) ascending."""
        headers = [
            item.header()
            for item in self._items.values()
            if (from_date is None or item.datestamp >= from_date)
            and (until_date is None or item.datestamp <= until_date)
        ]
        headers.sort(key=lambda h: (h.datestamp, h.identifier.value))
        return headers

    def disseminate(self, identifier: ItemIdentifier, prefix: str) -> Optional[str]:
        """The payload for prefix, or None when the item is deleted or lacks
        that format."""
        return self.get_item(identifier).payload(prefix)

    def formats_for(
        self, identifier: Optional[ItemIdentifier] = None
    ) -> list[MetadataFormatDescriptor]:
        """Formats for one item (catalog order), or the full catalog list."""
        if identifier is None:
            return self.formats
        prefixes = set(self.get_item(identifier).prefixes())
        return [fmt for fmt in self._formats if fmt.prefix in prefixes]

    def upsert_item(
        self,
        item: StoredItem,
        descriptors: Iterable[MetadataFormatDescriptor] = (),
    ) -> None:
        """Insert or replace an item; new payload prefixes must come with a
        descriptor (here or already in the catalog)."""
        extra = {d.prefix: d for d in descriptors}
        with self._lock:
            known = {fmt.prefix for fmt in self._formats}
            for prefix in item.prefixes():
                if prefix in known:
                    continue
                if prefix not in extra:
                    raise UnknownFormat(f"no descriptor for payload prefix {prefix!r}")
                self._formats.append(extra[prefix])
                known.add(prefix)
            self._items[item.identifier.value] = item

    def items(self) -> list[StoredItem]:
        return [self._items[k] for k in sorted(self._items)]


DC_FORMAT = MetadataFormatDescriptor("oai_dc", DC_SCHEMA_URL)
WIBBLE_FORMAT = MetadataFormatDescriptor("wibble", "http://wibble.org/wibble.xsd")

_DC_PAYLOAD_TEMPLATE = """\
<oai_dc xsi:schemaLocation="http://purl.org/dc/elements/1.1/
                            http://www.openarchives.org/OAI/dc.xsd"
        xmlns:xsi="http://www.w3.org/2000/10/XMLSchema-instance"
        xmlns="http://purl.org/dc/elements/1.1/">
 <title>{title}</title>
 <creator>{creator}</creator>
</oai_dc>"""


def dc_payload(title: str, creator: str) -> str:
    return _DC_PAYLOAD_TEMPLATE.format(title=escape(title), creator=escape(creator))


def fixture_store() -> MemoryStore:
    """The three-record seed catalog.

    record1's datestamp is never pinned anywhere authoritative; 1998-01-01 is
    chosen here so that an until=2000-01-01 query returns record1 and record2.
    """
    wibble_payload = (
        '<wibble xmlns="http://wibble.org/">\n'
        " <stuff>Item 1</stuff>\n"
        "</wibble>"
    )
    return MemoryStore(
        formats=[WIBBLE_FORMAT, DC_FORMAT],
        items=[
            StoredItem(
                ItemIdentifier("record1"),
                Datestamp(1998, 1, 1),
                payloads=(
                    ("oai_dc", dc_payload("Item 1", "Some Author")),
                    ("wibble", wibble_payload),
                ),
            ),
            StoredItem(
                ItemIdentifier("record2"),
                Datestamp(1999, 2, 12),
                payloads=(("oai_dc", dc_payload("Item 2", "A N Other")),),
            ),
            StoredItem(ItemIdentifier("record3"), Datestamp(2000, 3, 13), deleted=True),
        ],
    )


class FileStore(MemoryStore):
    """A MemoryStore persisted as one XML catalog file.

    Every upsert rewrites the file atomically (write-to-temp then rename), so
    concurrent readers of the file see a complete catalog.
    """

    def __init__(self, path: str):
        self.path = path
        formats: list[MetadataFormatDescriptor] = []
        items: list[StoredItem] = []
        if os.path.exists(path):
            formats, items = _load_catalog(path)
        super().__init__(formats=formats)
        for item in items:
            MemoryStore.upsert_item(self, item)

    def upsert_item(self, item, descriptors=()):
        super().upsert_item(item, descriptors)
        self.save()

    def save(self) -> None:
        tmp = self.path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(render_catalog(self))
        os.replace(tmp, self.path)


def render_catalog(store: MemoryStore) -> str:
    """Deterministic catalog serialization: formats in catalog order, items
    sorted by identifier, payload fragments embedded verbatim."""
    lines = ['<?xml version="1.0" encoding="UTF-8"?>', "<catalog>"]
    for fmt in store.formats:
        ns = f" namespace={quoteattr(fmt.namespace)}" if fmt.namespace else ""
        lines.append(
            f" <format prefix={quoteattr(fmt.prefix)} schema={quoteattr(fmt.schema_url)}{ns}/>"
        )
    for item in store.items():
        attrs = (
            f"identifier={quoteattr(item.identifier.value)}"
            f" datestamp={quoteattr(str(item.datestamp))}"
        )
        if item.deleted:
            attrs += ' deleted="true"'
        if not item.payloads:
            lines.append(f" <item {attrs}/>")
            continue
        lines.append(f" <item {attrs}>")
        for prefix, fragment in item.payloads:
            # fragments are embedded verbatim: re-indenting would add bytes to
            # their inner text nodes and break load/save round-trip stability
            lines.append(f"  <payload prefix={quoteattr(prefix)}>")
            lines.append(fragment.strip())
            lines.append("  </payload>")
        lines.append(" </item>")
    lines.append("</catalog>")
    return "\n".join(lines) + "\n"


def _load_catalog(path: str) -> tuple[list[MetadataFormatDescriptor], list[StoredItem]]:
    root = ET.parse(path).getroot()
    formats = [
        MetadataFormatDescriptor(
            el.get("prefix"), el.get("schema"), el.get("namespace")
        )
        for el in root.findall("format")
    ]
    items = []
    for el in root.findall("item"):
        payloads = []
        for payload_el in el.findall("payload"):
            children = list(payload_el)
            if not children:
                continue
            fragment = ET.tostring(children[0], encoding="unicode").strip()
            payloads.append((payload_el.get("prefix"), fragment))
        items.append(
            StoredItem(
                ItemIdentifier(el.get("identifier")),
                datestamp_parse(el.get("datestamp")),
                deleted=el.get("deleted") == "true",
                payloads=tuple(payloads),
            )
        )
    return formats, items
