"""
Deterministic simulated world.

Phones and beacons have positions; phones scan every scan period at a per-device
phase offset drawn from the world seed. A device is visible to an observer when it
advertises, is not in invisible mode and lies within radio range. Every phone talks
to one in-process broker over a SimLink that scripts can switch up or down.
"""

import logging
import random
from dataclasses import dataclass, field

from ctxaware.broker import Broker
from ctxaware.config import Config
from ctxaware.device import DeviceApp
from ctxaware.feedback import RecordingSink
from ctxaware.link import BrokerSession, SimLink
from ctxaware.model import CtxError, DeviceId, GeoPoint, ManualClock
from ctxaware.presence import ScanResult
from ctxaware.store import ClientStore
from ctxaware.triggers import geo_distance

logger = logging.getLogger(__name__)


class UnknownDevice(CtxError, LookupError):
    """Device alias or id not present in the world."""

    def __init__(self, ref: str):
        self.ref = ref
        super().__init__(f"Unknown device {ref!r}")


@dataclass
class VirtualDevice:
    """
    One device in the world.

    Attributes:
        alias: Script name.
        device: Radio id.
        position: True position.
        advertising: Radio on (phones additionally honour invisible mode).
        name: Advertised radio name.
        app: Context-aware client (None for beacons).
        link: Link to the broker (None for beacons).
        sink: Feedback emissions of the app.
        next_scan: Time of the next scan (phones only).
    """

    alias: str
    device: DeviceId
    position: GeoPoint
    advertising: bool = True
    name: str | None = None
    app: DeviceApp | None = None
    link: SimLink | None = None
    sink: RecordingSink = field(default_factory=RecordingSink)
    next_scan: int | None = None

    @property
    def is_phone(self) -> bool:
        return self.app is not None

    @property
    def visible(self) -> bool:
        return self.advertising and (self.app is None or self.app.is_advertising)


class WorldState:
    """Devices, broker and clock of one simulation run."""

    def __init__(self, config: Config, start: int, seed: int | None = None) -> None:
        self.config = config
        self.seed = config.sim.seed if seed is None else seed
        self.rng = random.Random(self.seed)
        self.clock = ManualClock(start)
        self.broker = Broker(self.clock)
        self.devices: dict[str, VirtualDevice] = {}
        self._by_id: dict[DeviceId, VirtualDevice] = {}

    def _add(self, dev: VirtualDevice) -> VirtualDevice:
        if dev.alias in self.devices or dev.device in self._by_id:
            raise ValueError(f"Device {dev.alias} ({dev.device}) declared twice")
        self.devices[dev.alias] = dev
        self._by_id[dev.device] = dev
        return dev

    def add_phone(
        self,
        alias: str,
        device: DeviceId,
        position: GeoPoint,
        name: str | None = None,
        advertising: bool = True,
        link_up: bool = True,
    ) -> VirtualDevice:
        """Add a phone with an in-memory store, registered with the broker if its link is up."""
        sink = RecordingSink()
        app = DeviceApp(device, ClientStore(), self.config, self.clock, sink, position)
        link = SimLink(self.broker, up=link_up)
        app.connect(BrokerSession(link, retries=self.config.broker.retries))
        period = self.config.presence.scan_period_ms
        dev = VirtualDevice(
            alias,
            device,
            position,
            advertising,
            name,
            app,
            link,
            sink,
            next_scan=self.clock.now() + self.rng.randrange(period),
        )
        self._add(dev)
        if link_up and app.sync is not None:
            app.sync.ensure_registered()
        return dev

    def add_beacon(
        self, alias: str, device: DeviceId, position: GeoPoint, name: str | None = None
    ) -> VirtualDevice:
        return self._add(VirtualDevice(alias, device, position, True, name))

    def resolve(self, ref: str) -> VirtualDevice:
        """Look a device up by alias or radio id."""
        dev = self.devices.get(ref)
        if dev is not None:
            return dev
        for candidate in self._by_id.values():
            if candidate.device.value == ref.upper():
                return candidate
        raise UnknownDevice(ref)

    def phone(self, ref: str) -> DeviceApp:
        dev = self.resolve(ref)
        if dev.app is None:
            raise UnknownDevice(f"{ref} (not a phone)")
        return dev.app

    def phones(self) -> list[VirtualDevice]:
        return [d for _, d in sorted(self._by_id.items()) if d.is_phone]

    def observed_position(self, dev: VirtualDevice) -> GeoPoint:
        """Position as the device's GPS reports it (uniform jitter, seeded)."""
        jitter = self.config.sim.gps_jitter_m
        if jitter <= 0:
            return dev.position
        north = self.rng.uniform(-jitter, jitter)
        east = self.rng.uniform(-jitter, jitter)
        return dev.position.offset(north, east)

    def move_to(self, ref: str, point: GeoPoint) -> None:
        dev = self.resolve(ref)
        dev.position = point
        if dev.app is not None:
            dev.app.move_to(self.observed_position(dev))

    def set_advertising(self, ref: str, advertising: bool) -> None:
        self.resolve(ref).advertising = advertising

    def set_link(self, ref: str, up: bool) -> None:
        dev = self.resolve(ref)
        if dev.link is None:
            raise UnknownDevice(f"{ref} (no link)")
        dev.link.set_up(up)
        logger.info(f"Link of {dev.alias} {'up' if up else 'down'} at {self.clock.now()}")
        if up:
            self.pump()

    def radio_scan(self, observer: DeviceId) -> ScanResult:
        """
        Devices the observer's radio sees right now.

        Raises:
            UnknownDevice: Observer not in the world.
        """
        me = self._by_id.get(observer)
        if me is None:
            raise UnknownDevice(observer.value)
        limit = self.config.sim.radio_range_m
        seen = [
            (d.device, d.name)
            for d in self._by_id.values()
            if d.device != observer and d.visible and geo_distance(me.position, d.position) <= limit
        ]
        return ScanResult.of(self.clock.now(), seen)

    def advance_to(self, t: int) -> None:
        """Run every scan due up to and including `t`, in (time, device) order."""
        period = self.config.presence.scan_period_ms
        while True:
            due = [d for d in self.phones() if d.next_scan is not None and d.next_scan <= t]
            if not due:
                break
            dev = min(due, key=lambda d: (d.next_scan, d.device))
            assert dev.app is not None and dev.next_scan is not None
            self.clock.advance_to(dev.next_scan)
            dev.app.on_scan(self.radio_scan(dev.device), self.observed_position(dev))
            dev.next_scan += period
        self.clock.advance_to(t)

    def pump(self, max_rounds: int = 20) -> int:
        """
        Sync every phone with an up link until nothing moves.

        Returns:
            Rounds run.
        """
        rounds = 0
        while rounds < max_rounds:
            rounds += 1
            activity = False
            for dev in self.phones():
                if dev.link is None or not dev.link.is_up or dev.app is None:
                    continue
                result = dev.app.synchronize()
                if result.rows_sent or result.applied or result.duplicates:
                    activity = True
            if not activity:
                break
        return rounds

    def quiescent(self) -> bool:
        """No dirty rows and no queued pushes for any phone with an up link."""
        for dev in self.phones():
            if dev.link is None or not dev.link.is_up or dev.app is None:
                continue
            if dev.app.store.dirty_count() or self.broker.pending_count(dev.device):
                return False
        return True
