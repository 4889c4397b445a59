"""
Unit tests for shared domain types.
"""

from dataclasses import replace

import pytest

from ctxaware.model import (
    AudioBody,
    ContactAssociation,
    DeviceId,
    GeoPoint,
    InvalidCoordinate,
    InvalidNote,
    LocationDef,
    LocationKind,
    MalformedId,
    ManualClock,
    MissingCarrierTrigger,
    Note,
    NoteId,
    Notification,
    PrivacyState,
    TextBody,
    TimeWindow,
    parse_device_id,
)

ALICE = DeviceId("02:00:00:00:00:02")


class TestDeviceId:
    """Test MAC parsing and canonical form."""

    def test_parse_canonicalizes_case(self):
        """Lowercase input is upper-cased."""
        assert parse_device_id("34:c8:03:f6:f3:a8") == DeviceId("34:C8:03:F6:F3:A8")

    def test_parse_strips_whitespace(self):
        """Surrounding whitespace is ignored."""
        assert parse_device_id("  34:C8:03:F6:F3:A8\n").value == "34:C8:03:F6:F3:A8"

    def test_parse_wrong_group_count(self):
        """Five groups is malformed."""
        with pytest.raises(MalformedId, match="expected 6 groups"):
            parse_device_id("34:C8:03:F6:F3")

    def test_parse_non_hex(self):
        """Non-hex digits are malformed."""
        with pytest.raises(MalformedId, match="non-hex"):
            parse_device_id("34:C8:03:F6:F3:ZZ")

    def test_direct_construction_requires_canonical(self):
        """DeviceId itself refuses lowercase."""
        with pytest.raises(MalformedId):
            DeviceId("34:c8:03:f6:f3:a8")

    @pytest.mark.parametrize(
        "value", ["34:C8:03:F6:F3:A8\n", " 34:C8:03:F6:F3:A8", "34:C8:03:F6:F3:A8:"]
    )
    def test_direct_construction_rejects_trailing_text(self, value):
        """Only the bare canonical form is a DeviceId."""
        with pytest.raises(MalformedId):
            DeviceId(value)

    def test_malformed_id_is_value_error(self):
        """MalformedId can be caught as ValueError."""
        with pytest.raises(ValueError):
            parse_device_id("nonsense")


class TestGeoPoint:
    """Test coordinate validation."""

    def test_latitude_out_of_range(self):
        """Latitude above 90 is rejected."""
        with pytest.raises(InvalidCoordinate):
            GeoPoint(90.5, 0.0)

    def test_longitude_out_of_range(self):
        """Longitude below -180 is rejected."""
        with pytest.raises(InvalidCoordinate):
            GeoPoint(0.0, -180.1)

    def test_nan_rejected(self):
        """NaN is rejected."""
        with pytest.raises(InvalidCoordinate):
            GeoPoint(float("nan"), 0.0)

    def test_offset_north(self):
        """A 111.19 m northward offset moves about 0.001 degrees."""
        p = GeoPoint(38.7, -9.1).offset(111.19493, 0.0)
        assert p.lat == pytest.approx(38.701, abs=1e-9)
        assert p.lon == pytest.approx(-9.1)

    def test_list_round_trip(self):
        """to_list/from_list preserve the point."""
        p = GeoPoint(38.738522, -9.1543572)
        assert GeoPoint.from_list(p.to_list()) == p


class TestLocationDef:
    """Test indoor/outdoor invariants."""

    def test_indoor_needs_beacon(self):
        """Indoor without beacon is invalid."""
        with pytest.raises(InvalidNote):
            LocationDef(1, LocationKind.INDOOR, "Room")

    def test_outdoor_needs_point(self):
        """Outdoor without point is invalid."""
        with pytest.raises(InvalidNote):
            LocationDef(1, LocationKind.OUTDOOR, "Park")

    def test_dict_round_trip(self):
        """Serialized form restores the same location."""
        loc = LocationDef(3, LocationKind.INDOOR, "Lab", beacon=ALICE)
        assert LocationDef.from_dict(loc.to_dict()) == loc


class TestNote:
    """Test note identity and invariants."""

    def _note(self, **kwargs):
        return Note(NoteId(ALICE, 1), TextBody("hi"), 0, **kwargs)

    def test_note_id_text_round_trip(self):
        """NoteId renders as MAC/seq and parses back."""
        nid = NoteId(ALICE, 42)
        assert str(nid) == "02:00:00:00:00:02/42"
        assert NoteId.parse(str(nid)) == nid

    def test_note_id_parse_rejects_garbage(self):
        """Missing sequence is an error."""
        with pytest.raises(ValueError):
            NoteId.parse("02:00:00:00:00:02")

    def test_manual_without_triggers(self):
        """No triggers means manual."""
        assert self._note().is_manual is True
        assert self._note(person_triggers=frozenset({1})).is_manual is False

    def test_carrier_must_be_person_trigger(self):
        """A carrier outside the person triggers violates the invariant."""
        with pytest.raises(MissingCarrierTrigger):
            self._note(person_triggers=frozenset({1}), carrier=2)

    def test_shared(self):
        """Recipients or the public flag make a note shared."""
        assert self._note().is_shared is False
        assert self._note(recipients=frozenset({5})).is_shared is True
        assert self._note(public=True).is_shared is True

    def test_dict_round_trip_audio(self):
        """Audio bodies survive serialization."""
        note = replace(
            self._note(),
            body=AudioBody(b"\x00\x01\xff", 1200),
            location_triggers=frozenset({2}),
            time_window=TimeWindow(10, 20),
        )
        assert Note.from_dict(note.to_dict()) == note

    def test_empty_window_rejected(self):
        """Window end must be after start."""
        with pytest.raises(InvalidNote):
            TimeWindow(10, 10)

    def test_window_half_open(self):
        """Start is inside, end is outside."""
        w = TimeWindow(10, 20)
        assert w.contains(10) and w.contains(19)
        assert not w.contains(20)


class TestPrivacyState:
    """Test ignore expiry and suppression."""

    def test_ignore_expiry_exclusive(self):
        """An ignore entry stops applying at its expiry instant."""
        privacy = PrivacyState(ignored=((7, 1000),))
        assert privacy.is_ignored(7, 999) is True
        assert privacy.is_ignored(7, 1000) is False

    def test_blocked_by_suppresses(self):
        """A device that blocked me is suppressed regardless of contacts."""
        privacy = PrivacyState(blocked_by=frozenset({ALICE}))
        assert privacy.suppresses(ALICE, None, 0) is True

    def test_unknown_contact_never_ignored(self):
        """Devices without a contact cannot be ignored."""
        assert PrivacyState(ignored=((7, 1000),)).is_ignored(None, 0) is False


class TestNotification:
    """Test notification construction."""

    def test_person_nearby_subject(self):
        """PersonNearby is about a device."""
        n = Notification.person_nearby(ALICE, 5, 1)
        assert n.subject == ALICE.value
        assert n.alert_kind.value == "person_nearby"

    def test_note_fired_needs_note(self):
        """NoteFired without a note id is invalid."""
        from ctxaware.model import NotificationKind

        with pytest.raises(ValueError):
            Notification(NotificationKind.NOTE_FIRED, 0)


class TestContactAssociation:
    """Test contact rows."""

    def test_dict_round_trip(self):
        """Serialized association restores equal."""
        assoc = ContactAssociation(1, "Alice", ALICE)
        assert ContactAssociation.from_dict(assoc.to_dict()) == assoc


class TestManualClock:
    """Test the simulation clock."""

    def test_cannot_go_backwards(self):
        """Moving the clock back raises."""
        clock = ManualClock(100)
        with pytest.raises(ValueError):
            clock.advance_to(99)

    def test_advance(self):
        """advance adds a delta."""
        clock = ManualClock(100)
        clock.advance(50)
        assert clock.now() == 150
