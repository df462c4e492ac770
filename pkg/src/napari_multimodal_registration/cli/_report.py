"""
Author: Abhishek Patil <abhishek@zeroth.me>
Description: Line-oriented run reports and run manifests.
"""

import logging
import shlex
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np

from ..libs._registration import RegistrationResult

logger = logging.getLogger(__name__)


def _format_value(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list, np.ndarray)):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, np.generic):
        return _format_value(value.item())
    if value is None:
        return "none"
    return str(value)


def format_report(items: Iterable[Tuple[str, Any]]) -> str:
    """``key=value`` per line."""
    return "\n".join(f"{key}={_format_value(value)}" for key, value in items) + "\n"


def flatten(prefix: str, mapping: Dict[str, Any]) -> List[Tuple[str, Any]]:
    return [(f"{prefix}.{key}", value) for key, value in mapping.items()]


def registration_items(result: RegistrationResult) -> List[Tuple[str, Any]]:
    """Report lines of a deformable registration, coarsest level first."""
    items: List[Tuple[str, Any]] = [
        ("measure", result.config.measure),
        ("levels", result.config.levels),
    ]
    if result.config.measure == "nmi_mind":
        items.append(("scale_strategy", result.config.scale_strategy))
    for trace in result.traces:
        key = f"level.{trace.level}"
        items += [
            (f"{key}.dims", "x".join(str(n) for n in trace.dims)),
            (f"{key}.iterations", trace.iterations),
            (f"{key}.stop", trace.stop_reason),
            (f"{key}.costs", trace.costs),
        ]
        if trace.scale is not None:
            items.append((f"{key}.s", trace.scale))
        if trace.consistency_steps:
            items.append((f"{key}.consistency_steps", trace.consistency_steps))
            items.append((f"{key}.consistency_costs", trace.consistency_costs))
    items += [("final_cost", result.final_cost), ("wall_time", result.wall_time)]
    return items


@dataclass
class RunManifest:
    """
    Everything needed to repeat a run: the command line, every resolved
    setting, inputs, outputs and the seed.
    """

    subcommand: str
    argv: List[str]
    version: str
    seed: int
    config: Dict[str, Any] = field(default_factory=dict)
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    wall_time: float = 0.0

    def items(self) -> List[Tuple[str, Any]]:
        items: List[Tuple[str, Any]] = [
            ("tool", "mmreg"),
            ("version", self.version),
            ("subcommand", self.subcommand),
            ("argv", shlex.join(self.argv)),
            ("seed", self.seed),
        ]
        items += flatten("config", self.config)
        items += flatten("input", self.inputs)
        items += flatten("output", self.outputs)
        items.append(("wall_time", self.wall_time))
        return items

    def default_path(self) -> Optional[Path]:
        for path in self.outputs.values():
            if path:
                return Path(f"{path}.manifest.txt")
        return None

    def write(self, path: Optional[str] = None) -> Optional[Path]:
        target = Path(path) if path else self.default_path()
        text = format_report(self.items())
        if target is None:
            logger.info("run manifest:\n%s", text)
            return None
        target.write_text(text)
        logger.info("wrote manifest %s", target)
        return target
