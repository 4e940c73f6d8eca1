"""Scenario files (YAML): network, demand, timing, seeds and config overrides.

Example::

    name: grid_1x1
    network: {rows: 1, cols: 1, length_ew: 300.0, length_ns: 300.0, speed: 10.0}
    timing: {episode_length: 3600, decision_interval: 10, yellow: 3, all_red: 2}
    turn_ratios: [0.1, 0.8, 0.1]        # left, through, right
    arrivals:
      - entry: r0c0:W                   # boundary road on the west side of (0, 0)
        process: poisson                # or deterministic
        windows: [[0, 3600, 400.0]]     # [start s, end s, vehicles/hour]
    seeds: [0, 1, 2]
    config: {k: 8}

Arrival rates are per entry road (all three lanes together).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .config import Config


class ScenarioError(ValueError):
    pass


DEFAULT_FIXED_PLAN = ((0, 30), (1, 30), (2, 30), (3, 30))


@dataclass
class ArrivalSpec:
    entry: str
    windows: list
    process: str = "poisson"
    turn_ratios: list | None = None


@dataclass
class Scenario:
    name: str
    rows: int
    cols: int
    length_ew: float = 300.0
    length_ns: float = 300.0
    speed: float = 10.0
    episode_length: int = 3600
    decision_interval: int = 10
    yellow: int = 3
    all_red: int = 2
    turn_ratios: list = field(default_factory=lambda: [0.1, 0.8, 0.1])
    arrivals: list = field(default_factory=list)
    seeds: list = field(default_factory=lambda: [0])
    fixed_time_plan: list = field(default_factory=lambda: [list(p) for p in DEFAULT_FIXED_PLAN])
    config: dict = field(default_factory=dict)
    description: str = ""

    def make_config(self, **overrides) -> Config:
        d = dict(self.config)
        d.update(overrides)
        return Config().replace(**d)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "network": {
                "rows": self.rows,
                "cols": self.cols,
                "length_ew": self.length_ew,
                "length_ns": self.length_ns,
                "speed": self.speed,
            },
            "timing": {
                "episode_length": self.episode_length,
                "decision_interval": self.decision_interval,
                "yellow": self.yellow,
                "all_red": self.all_red,
            },
            "turn_ratios": list(self.turn_ratios),
            "arrivals": [
                {k: v for k, v in asdict(a).items() if v is not None} for a in self.arrivals
            ],
            "seeds": list(self.seeds),
            "fixed_time_plan": [list(p) for p in self.fixed_time_plan],
            "config": dict(self.config),
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


def _check_ratios(ratios, where: str) -> list:
    if not isinstance(ratios, (list, tuple)) or len(ratios) != 3:
        raise ScenarioError(f"{where}: turn ratios need three entries [left, through, right]")
    ratios = [float(x) for x in ratios]
    if any(x < 0 for x in ratios):
        raise ScenarioError(f"{where}: negative turn ratio {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ScenarioError(f"{where}: turn ratios {ratios} sum to {sum(ratios)}, not 1")
    return ratios


def _entry_exists(entry: str, rows: int, cols: int) -> bool:
    try:
        rc, side = entry.split(":")
        r, c = rc[1:].split("c")
        r, c = int(r), int(c)
    except ValueError:
        return False
    if rc[0] != "r" or side not in "NESW" or len(side) != 1:
        return False
    if not (0 <= r < rows and 0 <= c < cols):
        return False
    return {"N": r == 0, "S": r == rows - 1, "W": c == 0, "E": c == cols - 1}[side]


def scenario_from_dict(doc: dict, source: str = "<scenario>") -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError(f"{source}: top level must be a mapping")
    net = doc.get("network", {})
    timing = doc.get("timing", {})
    try:
        rows, cols = int(net["rows"]), int(net["cols"])
    except KeyError as exc:
        raise ScenarioError(f"{source}: network.{exc.args[0]} is required") from None
    if rows < 1 or cols < 1:
        raise ScenarioError(f"{source}: grid must be at least 1x1")
    sc = Scenario(
        name=str(doc.get("name", Path(source).stem)),
        description=str(doc.get("description", "")),
        rows=rows,
        cols=cols,
        length_ew=float(net.get("length_ew", 300.0)),
        length_ns=float(net.get("length_ns", 300.0)),
        speed=float(net.get("speed", 10.0)),
        episode_length=int(timing.get("episode_length", 3600)),
        decision_interval=int(timing.get("decision_interval", 10)),
        yellow=int(timing.get("yellow", 3)),
        all_red=int(timing.get("all_red", 2)),
        seeds=[int(s) for s in doc.get("seeds", [0])],
        config=dict(doc.get("config") or {}),
    )
    if sc.length_ew <= 0 or sc.length_ns <= 0 or sc.speed <= 0:
        raise ScenarioError(f"{source}: link lengths and speed must be positive")
    if sc.yellow + sc.all_red >= sc.decision_interval:
        raise ScenarioError(f"{source}: yellow + all-red must be shorter than the decision interval")
    if sc.episode_length % sc.decision_interval:
        raise ScenarioError(f"{source}: episode length must be a multiple of the decision interval")
    sc.turn_ratios = _check_ratios(doc.get("turn_ratios", [0.1, 0.8, 0.1]), f"{source}: turn_ratios")
    for j, a in enumerate(doc.get("arrivals") or []):
        where = f"{source}: arrivals[{j}]"
        entry = str(a.get("entry", ""))
        if not _entry_exists(entry, rows, cols):
            raise ScenarioError(f"{where}: {entry!r} is not a boundary entry of a {rows}x{cols} grid")
        process = a.get("process", "poisson")
        if process not in ("poisson", "deterministic"):
            raise ScenarioError(f"{where}: unknown process {process!r}")
        windows = []
        for w in a.get("windows", []):
            if len(w) != 3:
                raise ScenarioError(f"{where}: window {w} must be [start, end, rate]")
            start, end, rate = float(w[0]), float(w[1]), float(w[2])
            if rate < 0:
                raise ScenarioError(f"{where}: negative arrival rate {rate}")
            if end < start:
                raise ScenarioError(f"{where}: window ends before it starts {w}")
            windows.append([start, end, rate])
        ratios = a.get("turn_ratios")
        sc.arrivals.append(
            ArrivalSpec(
                entry=entry,
                windows=windows,
                process=process,
                turn_ratios=None if ratios is None else _check_ratios(ratios, where),
            )
        )
    plan = doc.get("fixed_time_plan")
    if plan is not None:
        if not plan:
            raise ScenarioError(f"{source}: fixed_time_plan is empty")
        sc.fixed_time_plan = [[int(p), int(d)] for p, d in plan]
    try:
        sc.make_config()
    except (KeyError, ValueError, TypeError) as exc:
        raise ScenarioError(f"{source}: config: {exc}") from None
    return sc


def bundled_scenarios() -> list[str]:
    root = resources.files("hamh") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def parse_scenario(path) -> Scenario:
    """Load a scenario from a YAML file or by bundled name (e.g. ``corridor_1x3``)."""
    p = Path(path)
    if p.is_file():
        text, source = p.read_text(), str(p)
    else:
        res = resources.files("hamh") / "scenarios" / f"{path}.yaml"
        if not res.is_file():
            raise FileNotFoundError(f"no scenario file or bundled scenario named {path!r}")
        text, source = res.read_text(), f"{path}.yaml"
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else "?"
        raise ScenarioError(f"{source}:{line}: syntax error: {getattr(exc, 'problem', exc)}") from None
    return scenario_from_dict(doc, source)


def write_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(yaml.safe_dump(scenario.to_dict(), sort_keys=False))
