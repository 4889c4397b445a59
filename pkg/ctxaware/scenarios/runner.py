"""
Scenario runner for the simulated world.

A scenario is a JSON script: a start time, a device roster and an ordered list of
steps. Action steps change the world (movement, radio, links, user operations) and
may carry an `at` time the world is advanced to first. Expectation steps are
assertions: people-near and received-note checks are evaluated when reached,
notification windows are checked after the last step.

Times are ISO-8601 (naive means UTC) or offsets from the start, `+H:MM:SS`.
"""

import json
import logging
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Annotated, Any, Callable, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ctxaware import logfmt
from ctxaware.config import Config
from ctxaware.device import DeviceApp
from ctxaware.model import (
    CtxError,
    GeoPoint,
    Notification,
    NoteId,
    TimeWindow,
    parse_device_id,
)
from ctxaware.scenarios.world import UnknownDevice, VirtualDevice, WorldState
from ctxaware.store import Gesture
from ctxaware.triggers import LocationTrigger, PersonTrigger, TimeTrigger, Trigger
from ctxaware.wire import canonical_json

logger = logging.getLogger(__name__)

EXAMPLES_DIR = Path(__file__).parent / "examples"

OPEN_WINDOW_END_MS = 253_402_300_799_000  # 9999-12-31T23:59:59Z

_OFFSET_RE = re.compile(r"^\+(\d+):([0-5]\d):([0-5]\d)$")


class ScriptError(CtxError):
    """Scenario script is malformed or refers to something that does not exist."""

    pass


class ExpectationFailed(CtxError):
    """An expectation step did not hold."""

    def __init__(self, step: str, actual: str):
        self.step = step
        self.actual = actual
        super().__init__(f"{step}: {actual}")


# Script schema


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DeviceSpec(_Model):
    alias: str
    id: str
    kind: Literal["phone", "beacon"] = "phone"
    name: str | None = None
    position: tuple[float, float]
    advertising: bool = True
    link: bool = True


class MoveTo(_Model):
    action: Literal["move_to"]
    device: str
    at: str | None = None
    point: tuple[float, float] | None = None
    near: str | None = None
    north_m: float = 0.0
    east_m: float = 0.0


class SetAdvertising(_Model):
    action: Literal["set_advertising"]
    device: str
    advertising: bool
    at: str | None = None


class SetLink(_Model):
    action: Literal["set_link"]
    device: str
    up: bool
    at: str | None = None


class UserAction(_Model):
    action: Literal["user"]
    device: str
    op: str
    args: dict[str, Any] = Field(default_factory=dict)
    ref: str | None = None
    at: str | None = None


class AdvanceTo(_Model):
    action: Literal["advance_to"]
    at: str


class ExpectNotification(_Model):
    """Exactly `count` matching notifications in [at, at + within_s] (or [at, until])."""

    action: Literal["expect_notification"]
    device: str
    kind: Literal["person_nearby", "note_fired"]
    subject: str | None = None
    at: str | None = None
    within_s: float = 60.0
    until: str | None = None
    count: int = Field(default=1, ge=0)


class ExpectNoNotification(_Model):
    action: Literal["expect_no_notification"]
    device: str
    kind: Literal["person_nearby", "note_fired"] | None = None
    subject: str | None = None
    from_: str | None = Field(default=None, alias="from")
    until: str


class ExpectPeopleNear(_Model):
    action: Literal["expect_people_near"]
    device: str
    at: str | None = None
    count: int | None = None
    includes: list[str] = Field(default_factory=list)


class ExpectReceived(_Model):
    action: Literal["expect_received"]
    device: str
    count: int
    at: str | None = None


Step = Annotated[
    MoveTo
    | SetAdvertising
    | SetLink
    | UserAction
    | AdvanceTo
    | ExpectNotification
    | ExpectNoNotification
    | ExpectPeopleNear
    | ExpectReceived,
    Field(discriminator="action"),
]


class ScenarioScript(_Model):
    """
    Scenario definition.

    Attributes:
        name: Scenario name.
        version: Scenario version.
        description: Scenario description.
        start: World start time.
        seed: World seed (overrides the configured one).
        config: Configuration overrides, section by section.
        devices: Device roster.
        steps: Ordered steps.
    """

    name: str
    version: str = "1.0"
    description: str = ""
    start: datetime
    seed: int | None = None
    config: dict[str, dict[str, Any]] = Field(default_factory=dict)
    devices: list[DeviceSpec]
    steps: list[Step] = Field(default_factory=list)


def load_script(path: Path) -> ScenarioScript:
    """
    Load scenario from JSON file.

    Raises:
        FileNotFoundError: If scenario file not found.
        ScriptError: If the file is not a valid scenario.
    """
    with open(path, encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ScriptError(f"{path}: not JSON: {e}") from e
    try:
        return ScenarioScript.model_validate(data)
    except ValidationError as e:
        raise ScriptError(f"{path}: {e}") from e


def list_scenarios(directory: Path = EXAMPLES_DIR) -> list[Path]:
    if not directory.exists():
        return []
    return sorted(directory.glob("*.json"))


def to_epoch_ms(value: datetime) -> int:
    if value.tzinfo is None:
        value = value.replace(tzinfo=timezone.utc)
    return int(value.timestamp() * 1000)


def resolve_time(text: str, start: int) -> int:
    """`+H:MM:SS` offset from `start`, or an absolute ISO-8601 time."""
    m = _OFFSET_RE.match(text)
    if m:
        hours, minutes, seconds = (int(g) for g in m.groups())
        return start + ((hours * 60 + minutes) * 60 + seconds) * 1000
    try:
        return to_epoch_ms(datetime.fromisoformat(text))
    except ValueError as e:
        raise ScriptError(f"Bad time {text!r}") from e


# Reports


class ScenarioResult(Enum):
    """Scenario execution result."""

    PASSED = "passed"
    FAILED = "failed"
    ERROR = "error"


@dataclass
class StepResult:
    """Result of a single step."""

    name: str
    passed: bool
    message: str = ""
    details: dict = field(default_factory=dict)


@dataclass
class ScenarioReport:
    """Scenario execution report."""

    name: str
    description: str
    result: ScenarioResult
    seed: int = 0
    steps: list[StepResult] = field(default_factory=list)
    duration_s: float = 0.0

    def add_step(self, name: str, passed: bool, message: str = "", **details: Any) -> None:
        """Add step result to report."""
        self.steps.append(StepResult(name, passed, message, details))

    @property
    def passed_count(self) -> int:
        """Count of passed steps."""
        return sum(1 for s in self.steps if s.passed)

    @property
    def failed_count(self) -> int:
        """Count of failed steps."""
        return sum(1 for s in self.steps if not s.passed)

    @property
    def failures(self) -> list[StepResult]:
        return [s for s in self.steps if not s.passed]

    def to_dict(self) -> dict[str, Any]:
        """Deterministic form (no wall-clock duration)."""
        return {
            "name": self.name,
            "description": self.description,
            "result": self.result.value,
            "seed": self.seed,
            "steps": [
                {"name": s.name, "passed": s.passed, "message": s.message, "details": s.details}
                for s in self.steps
            ],
        }


def notification_record(n: Notification) -> dict[str, Any]:
    return {
        "id": n.notification_id,
        "kind": n.kind.value,
        "at": n.at,
        "time": logfmt.format_timestamp(n.at),
        "subject": n.subject,
        "contact_id": n.contact_id,
        "alert": n.alert_kind.value,
        "acknowledged": n.acknowledged,
    }


# Runner


@dataclass
class _Window:
    step: ExpectNotification | ExpectNoNotification
    label: str
    lo: int
    hi: int
    count: int


class ScenarioRunner:
    """
    Executes one script against a fresh world.

    Attributes:
        world: The simulated world (available after `run`).
        refs: Values stored by user steps under their `ref` name.
    """

    def __init__(
        self, script: ScenarioScript, config: Config | None = None, seed: int | None = None
    ):
        base = (config or Config()).model_dump()
        for section, values in script.config.items():
            if section not in base:
                raise ScriptError(f"Unknown config section {section!r}")
            base[section].update(values)
        try:
            self.config = Config.model_validate(base)
        except ValidationError as e:
            raise ScriptError(f"Bad config override: {e}") from e
        self.script = script
        self.start = to_epoch_ms(script.start)
        self.seed = seed if seed is not None else (
            script.seed if script.seed is not None else self.config.sim.seed
        )
        self.world = WorldState(self.config, self.start, self.seed)
        self.refs: dict[str, Any] = {}
        self._windows: list[_Window] = []
        self.report = ScenarioReport(
            name=script.name,
            description=script.description,
            result=ScenarioResult.PASSED,
            seed=self.seed,
        )

    # helpers

    def _time(self, text: str) -> int:
        return resolve_time(text, self.start)

    def _advance(self, at: str | None) -> None:
        if at is None:
            return
        t = self._time(at)
        if t < self.world.clock.now():
            raise ScriptError(f"Step time {at} is earlier than the current time")
        self.world.advance_to(t)

    def _device(self, alias: str) -> VirtualDevice:
        try:
            return self.world.resolve(alias)
        except UnknownDevice as e:
            raise ScriptError(str(e)) from e

    def _phone(self, alias: str) -> DeviceApp:
        app = self._device(alias).app
        if app is None:
            raise ScriptError(f"{alias} is a beacon, not a phone")
        return app

    def _ref(self, value: Any) -> Any:
        if isinstance(value, str) and value.startswith("$"):
            name = value[1:]
            if name not in self.refs:
                raise ScriptError(f"Unknown reference {value}")
            return self.refs[name]
        return value

    def _refs(self, values: list[Any] | None) -> list[Any]:
        return [self._ref(v) for v in values or []]

    def _note_id(self, value: Any) -> NoteId:
        resolved = self._ref(value)
        return resolved if isinstance(resolved, NoteId) else NoteId.parse(str(resolved))

    def _window(self, spec: list[str | None]) -> TimeWindow:
        if len(spec) != 2 or spec[0] is None:
            raise ScriptError(f"Time window {spec!r} is not [start, end|null]")
        end = self._time(spec[1]) if spec[1] is not None else OPEN_WINDOW_END_MS
        return TimeWindow(self._time(spec[0]), end)

    def _trigger(self, args: dict[str, Any]) -> Trigger:
        if "person" in args:
            return PersonTrigger(int(args["person"]))
        if "location" in args:
            return LocationTrigger(int(self._ref(args["location"])))
        if "window" in args:
            return TimeTrigger(self._window(args["window"]))
        raise ScriptError(f"No trigger in {args!r}")

    def _subject_matches(self, n: Notification, subject: str | None) -> bool:
        if subject is None:
            return True
        if subject.startswith("$"):
            return n.note_id is not None and n.note_id == self._note_id(subject)
        return n.device is not None and n.device == self._device(subject).device

    # user operations

    def _user(self, step: UserAction) -> Any:
        app = self._phone(step.device)
        a = step.args
        now = self.world.clock.now()
        ops: dict[str, Callable[[], Any]] = {
            "add_contact": lambda: app.add_contact(
                int(a["contact_id"]), a.get("name", a["device"]), self._device(a["device"]).device
            ),
            "create_note": lambda: app.create_note(
                text=a.get("text"),
                audio=bytes(16) if "audio_ms" in a else None,
                audio_ms=int(a.get("audio_ms", 0)),
                person=[int(c) for c in a.get("person", [])],
                locations=[int(v) for v in self._refs(a.get("locations"))],
                window=self._window(a["window"]) if "window" in a else None,
                recipients=[int(c) for c in a.get("recipients", [])],
                carrier=a.get("carrier"),
                public=bool(a.get("public", False)),
            ).note_id,
            "attach": lambda: app.attach(self._note_id(a["note"]), self._trigger(a)).note_id,
            "detach": lambda: app.detach(self._note_id(a["note"]), self._trigger(a)).note_id,
            "send": lambda: app.send_note(
                self._note_id(a["note"]), [int(c) for c in a.get("to", [])], a.get("carrier")
            ).note_id,
            "publish": lambda: app.publish_note(self._note_id(a["note"])).note_id,
            "delete_note": lambda: app.delete_note(self._note_id(a["note"])),
            "dismiss": lambda: app.dismiss_received(self._note_id(a["note"])),
            "ignore": lambda: app.ignore(int(a["contact"]), self._time(a["until"])),
            "unignore": lambda: app.unignore(int(a["contact"])),
            "block": lambda: app.block(int(a["contact"])),
            "unblock": lambda: app.unblock(int(a["contact"])),
            "silence": lambda: app.set_silent(bool(a.get("on", True))),
            "invisible": lambda: app.set_invisible(bool(a.get("on", True))),
            "save_location": lambda: app.save_location(a["label"]).location_id,
            "tag_location": lambda: app.tag_indoor_location(
                a["label"], self._device(a["beacon"]).device
            ).location_id,
            "ack_all": app.acknowledge_all,
            "record_action": lambda: app.record_action(a["screen"], Gesture(a["command"])),
        }
        op = ops.get(step.op)
        if op is None:
            raise ScriptError(f"Unknown user operation {step.op!r}")
        try:
            result = op()
        except CtxError:
            raise
        except KeyError as e:
            raise ScriptError(f"{step.op}: missing argument {e}") from e
        except (TypeError, ValueError) as e:
            raise ScriptError(f"{step.op}: bad argument: {e}") from e
        logger.debug(f"{step.device} {step.op} at {now} -> {result}")
        if step.ref is not None:
            self.refs[step.ref] = result
        self.world.pump()
        return result

    # expectations

    def _check_people_near(self, step: ExpectPeopleNear, label: str) -> None:
        people = self._phone(step.device).people_near()
        devices = {p.device for p in people}
        if step.count is not None and len(people) != step.count:
            raise ExpectationFailed(label, f"{len(people)} people near, expected {step.count}")
        for alias in step.includes:
            if self._device(alias).device not in devices:
                seen = sorted(d.value for d in devices)
                raise ExpectationFailed(label, f"{alias} not among {seen}")

    def _check_received(self, step: ExpectReceived, label: str) -> None:
        received = self._phone(step.device).store.list_received()
        if len(received) != step.count:
            raise ExpectationFailed(label, f"{len(received)} received notes, expected {step.count}")

    def _register_window(self, step: ExpectNotification | ExpectNoNotification, label: str) -> None:
        now = self.world.clock.now()
        if isinstance(step, ExpectNotification):
            lo = self._time(step.at) if step.at else now
            hi = self._time(step.until) if step.until else lo + int(step.within_s * 1000)
            count = step.count
        else:
            lo = self._time(step.from_) if step.from_ else now
            hi = self._time(step.until)
            count = 0
        if hi < lo:
            raise ScriptError(f"{label}: window ends before it starts")
        self._windows.append(_Window(step, label, lo, hi, count))

    def _check_window(self, w: _Window) -> None:
        step = w.step
        notifications = self._phone(step.device).notifications()
        matches = [
            n
            for n in notifications
            if w.lo <= n.at <= w.hi
            and (step.kind is None or n.kind.value == step.kind)
            and self._subject_matches(n, step.subject)
        ]
        if len(matches) != w.count:
            times = ", ".join(logfmt.format_timestamp(n.at) for n in matches) or "none"
            raise ExpectationFailed(
                w.label, f"{len(matches)} matching notifications (at {times}), expected {w.count}"
            )

    # execution

    def _setup(self) -> None:
        for spec in self.script.devices:
            try:
                device = parse_device_id(spec.id)
                position = GeoPoint(*spec.position)
            except CtxError as e:
                raise ScriptError(f"Device {spec.alias}: {e}") from e
            if spec.kind == "beacon":
                self.world.add_beacon(spec.alias, device, position, spec.name)
            else:
                self.world.add_phone(
                    spec.alias, device, position, spec.name, spec.advertising, spec.link
                )
        self.world.pump()

    def _execute(self, step: Step, label: str) -> str:
        if isinstance(step, MoveTo):
            self._advance(step.at)
            if step.near is not None:
                base = self._device(step.near).position
            elif step.point is not None:
                base = GeoPoint(*step.point)
            else:
                raise ScriptError(f"{label}: move_to needs point or near")
            self.world.move_to(step.device, base.offset(step.north_m, step.east_m))
            return f"{step.device} moved"
        if isinstance(step, SetAdvertising):
            self._advance(step.at)
            self.world.set_advertising(step.device, step.advertising)
            return f"{step.device} advertising={step.advertising}"
        if isinstance(step, SetLink):
            self._advance(step.at)
            self.world.set_link(step.device, step.up)
            return f"{step.device} link {'up' if step.up else 'down'}"
        if isinstance(step, UserAction):
            self._advance(step.at)
            return f"{step.device} {step.op} -> {self._user(step)}"
        if isinstance(step, AdvanceTo):
            self._advance(step.at)
            return f"at {logfmt.format_timestamp(self.world.clock.now())}"
        if isinstance(step, ExpectPeopleNear):
            self._advance(step.at)
            self._check_people_near(step, label)
            return "people near as expected"
        if isinstance(step, ExpectReceived):
            self._advance(step.at)
            self._check_received(step, label)
            return f"{step.count} received"
        self._register_window(step, label)
        return "window registered"

    def run(self) -> ScenarioReport:
        """
        Run every step and check every expectation.

        Raises:
            ScriptError: The script is inconsistent (unknown alias, bad time, bad reference).
        """
        logger.info(f"Scenario {self.script.name} (seed {self.seed})")
        self._setup()
        for index, step in enumerate(self.script.steps, start=1):
            label = f"#{index} {step.action}"
            try:
                message = self._execute(step, label)
            except ExpectationFailed as e:
                self._fail(label, e.actual)
                continue
            except ScriptError:
                raise
            except CtxError as e:
                self._fail(label, f"{type(e).__name__}: {e}", error=True)
                return self.report
            if not isinstance(step, (ExpectNotification, ExpectNoNotification)):
                self.report.add_step(label, True, message)

        end = max([w.hi for w in self._windows], default=self.world.clock.now())
        self.world.advance_to(max(end, self.world.clock.now()))
        for w in self._windows:
            try:
                self._check_window(w)
            except ExpectationFailed as e:
                self._fail(w.label, e.actual)
            else:
                self.report.add_step(w.label, True, f"{w.count} matching notifications")
        return self.report

    def _fail(self, label: str, message: str, error: bool = False) -> None:
        logger.info(f"  [FAIL] {label}: {message}")
        self.report.add_step(label, False, message)
        if error:
            self.report.result = ScenarioResult.ERROR
        elif self.report.result is ScenarioResult.PASSED:
            self.report.result = ScenarioResult.FAILED

    def write_trace(self, directory: Path) -> None:
        """
        Write the run's artifacts.

        Layout: report.json, broker.json and one directory per device alias holding
        detections.log, notifications.jsonl, feedback.txt and store.json.
        """
        directory.mkdir(parents=True, exist_ok=True)
        _write_json(directory / "report.json", self.report.to_dict())
        _write_json(directory / "broker.json", self.world.broker.state.to_dict())
        for alias, dev in sorted(self.world.devices.items()):
            if dev.app is None:
                continue
            target = directory / alias
            target.mkdir(exist_ok=True)
            store = dev.app.store
            (target / "detections.log").write_text(store.export_detections(), encoding="utf-8")
            (target / "notifications.jsonl").write_text(
                "".join(
                    canonical_json(notification_record(n)).decode("utf-8") + "\n"
                    for n in dev.app.notifications()
                ),
                encoding="utf-8",
            )
            (target / "feedback.txt").write_text(
                "".join(
                    f"{logfmt.format_timestamp(at)}\t{pattern}\n"
                    for at, pattern in dev.sink.emissions
                ),
                encoding="utf-8",
            )
            _write_json(target / "store.json", store.dump())


def _write_json(path: Path, data: Any) -> None:
    text = json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False)
    path.write_text(text + "\n", encoding="utf-8")


def run_scenario(
    script: ScenarioScript,
    config: Config | None = None,
    seed: int | None = None,
    trace_dir: Path | None = None,
) -> ScenarioReport:
    """Run a script on a fresh world and optionally write its trace."""
    runner = ScenarioRunner(script, config, seed)
    report = runner.run()
    if trace_dir is not None:
        runner.write_trace(trace_dir)
    return report
