"""The data-provider service: request dispatch, paging, throttling, redirects.

`Provider.handle` is a pure-ish entry point (mutating only the throttle table
and redirect rotation) mapping one raw request to one HTTP response, so it is
equally usable from a real HTTP server, the command line, or an in-process
test transport.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Optional, Union

from .model import (
    Datestamp,
    ItemIdentifier,
    MalformedDate,
    MetadataRecord,
    OaiRequest,
    OaiVerb,
    RecordHeader,
    RepositoryDescription,
    ResponseDate,
    ResumptionToken,
    datestamp_parse,
)
from .request import RequestSyntaxError, encode_request, parse_request, validate_request
from .store import MemoryStore, NotFound
from .wire import BodyItem, ResponseEnvelope, render_envelope


@dataclass(frozen=True)
class ThrottlePolicy:
    """Per-client-address rate limit: serve at most one request per interval."""

    min_interval_seconds: int = 0
    retry_after_seconds: int = 60

    def __post_init__(self):
        if self.min_interval_seconds < 0:
            raise ValueError("min_interval_seconds must be non-negative")
        if self.min_interval_seconds > 0 and self.retry_after_seconds < 1:
            raise ValueError("retry_after_seconds must be at least 1")


@dataclass(frozen=True)
class ProviderConfig:
    repository: RepositoryDescription
    page_size: int = 100
    throttle: ThrottlePolicy = field(default_factory=ThrottlePolicy)
    redirect_targets: tuple[str, ...] = ()
    clock_offset_minutes: int = 0

    def __post_init__(self):
        if self.page_size < 1:
            raise ValueError("page_size must be at least 1")


@dataclass(frozen=True)
class HttpResponse:
    status: int
    body: str = ""
    content_type: str = "text/plain"
    headers: tuple[tuple[str, str], ...] = ()


class BadResumptionToken(ValueError):
    pass


@dataclass(frozen=True)
class PageCursor:
    """Stateless continuation cursor; encodes losslessly to a token string.

    Layout: verb:from:until:offset:prefix with '-' marking absent fields; the
    prefix comes last so it may contain further colons.
    """

    verb: OaiVerb
    from_date: Optional[Datestamp] = None
    until_date: Optional[Datestamp] = None
    prefix: Optional[str] = None
    offset: int = 0

    def encode(self) -> ResumptionToken:
        parts = [
            self.verb.value,
            str(self.from_date) if self.from_date else "-",
            str(self.until_date) if self.until_date else "-",
            str(self.offset),
            self.prefix if self.prefix else "-",
        ]
        return ResumptionToken(":".join(parts))

    @classmethod
    def decode(cls, token: str) -> "PageCursor":
        parts = token.split(":", 4)
        if len(parts) != 5:
            raise BadResumptionToken(token)
        verb_text, from_text, until_text, offset_text, prefix = parts
        try:
            verb = OaiVerb.from_string(verb_text)
            from_date = None if from_text == "-" else datestamp_parse(from_text)
            until_date = None if until_text == "-" else datestamp_parse(until_text)
            offset = int(offset_text)
        except (ValueError, MalformedDate):
            raise BadResumptionToken(token) from None
        if offset < 0:
            raise BadResumptionToken(token)
        return cls(verb, from_date, until_date, prefix if prefix != "-" else None, offset)


def throttle_check(
    last_served: dict[str, float],
    client_addr: str,
    now: float,
    policy: ThrottlePolicy,
) -> Optional[int]:
    """None when the request may be served (recording now as last-served time),
    otherwise the Retry-After interval in seconds.

    Denied requests do not update the table, so a client that waits the
    advertised interval is always served on its next attempt.
    """
    if policy.min_interval_seconds <= 0:
        return None
    last = last_served.get(client_addr)
    if last is not None and now - last < policy.min_interval_seconds:
        return policy.retry_after_seconds
    last_served[client_addr] = now
    return None


class Provider:
    def __init__(self, store: MemoryStore, config: ProviderConfig):
        self.store = store
        self.config = config
        self._last_served: dict[str, float] = {}
        self._throttle_lock = threading.Lock()
        self._redirect_index = 0

    # -- flow control -------------------------------------------------------

    def _check_throttle(self, client_addr: str, now: float) -> Optional[int]:
        with self._throttle_lock:
            return throttle_check(self._last_served, client_addr, now, self.config.throttle)

    def _next_redirect(self) -> str:
        with self._throttle_lock:
            target = self.config.redirect_targets[
                self._redirect_index % len(self.config.redirect_targets)
            ]
            self._redirect_index += 1
        return target

    # -- dispatch -----------------------------------------------------------

    def _request_url(self, req: OaiRequest) -> str:
        return self.config.repository.base_url + "?" + encode_request(req)

    def _full_result(
        self,
        verb: OaiVerb,
        from_date: Optional[Datestamp],
        until_date: Optional[Datestamp],
        prefix: Optional[str],
        set_arg: bool,
    ) -> list[BodyItem]:
        # sets are accepted by the grammar but this repository has none, so a
        # set-qualified selection matches nothing
        if set_arg:
            return []
        headers = self.store.ids_by_date(from_date, until_date)
        if verb is OaiVerb.LIST_IDENTIFIERS:
            return list(headers)
        if self.store.format_for_prefix(prefix) is None:
            # repository-unknown format: empty reply at repository level
            return []
        records = []
        for header in headers:
            payload = None
            if not header.deleted:
                payload = self.store.get_item(header.identifier).payload(prefix)
            records.append(MetadataRecord(header, payload))
        return records

    def dispatch(self, req: OaiRequest, now: float) -> ResponseEnvelope:
        """Build the response envelope for a validated request.

        Invalid parameter values (unknown identifier, unknown format, bad
        token) yield envelopes with reduced or empty bodies, never an error.
        """
        response_date = ResponseDate.from_epoch(now, self.config.clock_offset_minutes)
        request_url = self._request_url(req)

        def envelope(items: list[BodyItem], token: Optional[ResumptionToken] = None):
            return ResponseEnvelope(req.verb, response_date, request_url, tuple(items), token)

        verb = req.verb
        if verb is OaiVerb.IDENTIFY:
            return envelope([self.config.repository])

        if verb is OaiVerb.GET_RECORD:
            try:
                item = self.store.get_item(ItemIdentifier(req.arg("identifier")))
            except (NotFound, ValueError):
                return envelope([])
            return envelope([MetadataRecord(item.header(), item.payload(req.arg("metadataPrefix")))])

        # list verbs: compute the full result, then page it
        token_arg = req.arg("resumptionToken")
        if token_arg is not None:
            try:
                cursor = PageCursor.decode(token_arg)
                if cursor.verb is not verb:
                    raise BadResumptionToken(token_arg)
            except BadResumptionToken:
                return envelope([])
            # for ListMetadataFormats the cursor's prefix slot carries the
            # original identifier argument
            identifier = cursor.prefix if verb is OaiVerb.LIST_METADATA_FORMATS else None
            full = self._list_result(verb, cursor.from_date, cursor.until_date, cursor.prefix,
                                     False, identifier=identifier)
            if cursor.offset > len(full):
                return envelope([])
            page, token = self._paginate(full, verb, cursor.from_date, cursor.until_date,
                                         cursor.prefix, cursor.offset)
            return envelope(page, token)

        from_date = _maybe_date(req.arg("from"))
        until_date = _maybe_date(req.arg("until"))
        prefix = req.arg("metadataPrefix")
        set_arg = req.arg("set") is not None
        identifier = req.arg("identifier")
        full = self._list_result(verb, from_date, until_date, prefix, set_arg,
                                 identifier=identifier)
        cursor_prefix = identifier if verb is OaiVerb.LIST_METADATA_FORMATS else prefix
        page, token = self._paginate(full, verb, from_date, until_date, cursor_prefix, 0)
        return envelope(page, token)

    def _list_result(
        self,
        verb: OaiVerb,
        from_date: Optional[Datestamp],
        until_date: Optional[Datestamp],
        prefix: Optional[str],
        set_arg: bool,
        identifier: Optional[str] = None,
    ) -> list[BodyItem]:
        if verb is OaiVerb.LIST_SETS:
            return []
        if verb is OaiVerb.LIST_METADATA_FORMATS:
            if identifier is None:
                return list(self.store.formats)
            try:
                return self.store.formats_for(ItemIdentifier(identifier))
            except (NotFound, ValueError):
                return []
        return self._full_result(verb, from_date, until_date, prefix, set_arg)

    def _paginate(
        self,
        full: list[BodyItem],
        verb: OaiVerb,
        from_date: Optional[Datestamp],
        until_date: Optional[Datestamp],
        prefix: Optional[str],
        offset: int,
    ) -> tuple[list[BodyItem], Optional[ResumptionToken]]:
        page = full[offset : offset + self.config.page_size]
        end = offset + self.config.page_size
        if end >= len(full):
            return page, None
        cursor = PageCursor(verb, from_date, until_date, prefix, end)
        return page, cursor.encode()

    # -- HTTP surface -------------------------------------------------------

    def handle(
        self, client_addr: str, method: str, raw_request: str, now: float
    ) -> HttpResponse:
        """Answer one request: 503 (throttled), 302 (redirect policy), 400
        (syntax error), 200 (envelope), or 500 on internal failure."""
        retry = self._check_throttle(client_addr, now)
        if retry is not None:
            return HttpResponse(503, "Retry after %d seconds\n" % retry,
                                headers=(("Retry-After", str(retry)),))
        if self.config.redirect_targets:
            location = self._next_redirect()
            if method.upper() == "GET" and raw_request:
                location = location + "?" + raw_request
            return HttpResponse(302, headers=(("Location", location),))
        try:
            try:
                req = validate_request(parse_request(raw_request))
            except RequestSyntaxError as exc:
                return HttpResponse(400, exc.message + "\n")
            body = render_envelope(self.dispatch(req, now))
            return HttpResponse(200, body, content_type="text/xml")
        except Exception as exc:  # pragma: no cover - defensive
            return HttpResponse(500, f"internal error: {exc}\n")


def _maybe_date(text: Optional[str]) -> Optional[Datestamp]:
    return datestamp_parse(text) if text is not None else None
