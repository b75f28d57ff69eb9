"""RunConfig: built-in defaults merged section by section with a YAML file.

Unknown sections and keys are rejected with the file and line they appear
on; values must match the type of their default.
"""
import copy
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import yaml

from common.artifacts import provenance
from common.errors import ConfigError, InvalidInput
from common.logger import logger
from deploy_sim.links import LinkProfile
from deploy_sim.power import PowerProfile
from exit_graph.partition import NodeRole
from exit_graph.placements import ExitPlacement
from ga_optimizer.genetic import GAConfig
from ga_optimizer.objective import ObjectiveWeights
from trainer.training import TrainConfig

DEFAULT_CONFIG_PATH = Path(__file__).parent / "run_config.yaml"

DEFAULT_CONFIG: Dict[str, Dict[str, Any]] = {
    "data": {
        "per_class": 200,
        "noise_sigma": 0.05,
        "split": [0.7, 0.15, 0.15],
        "seed": 0,
    },
    "model": {
        "channels": [8, 16, 16, 32, 32, 64],
        "hidden": 32,
        "kernel_size": 5,
    },
    "exits": {
        "placement": [2],
        "bottleneck_size": 16,
        "roles": ["edge", "cloud"],
        "edge_budget_bytes": 256 * 1024,
    },
    "training": {
        "epochs": 30,
        "batch_size": 16,
        "learning_rate": 0.05,
        "exit_loss_weights": None,
        "seed": 0,
    },
    "sweep": {
        "start": 0.0,
        "stop": 1.0,
        "step": 0.01,
        "workers": 1,
        "raw_beat_bytes": 1040,
    },
    "optimizer": {
        "w_acc": 1.0,
        "w_sen": 1.0,
        "w_com": 1.0,
        "population_size": 20,
        "generations": 50,
        "crossover_prob": 0.8,
        "mutation_prob": 0.1,
        "seed": 0,
    },
    "power": {
        "i_sleep": 0.58,
        "i_infer": 0.74,
        "i_tx_connected": 3.66,
        "i_tx_broadcast": 3.20,
        "t_infer": 0.5,
        "t_tx": 0.45,
        "beat_period": 1.0,
        "thresholds": [0.5, 0.6, 0.7, 0.8, 0.9],
    },
    "links": {
        "enabled": False,
        "delay_s": [0.02, 0.05],
        "bandwidth_bps": [1e6, 1e8],
        "throughput_flops": {"edge": 64e6, "fog": 2e9, "cloud": 50e9},
    },
    "output": {
        "dir": "output",
        "name": "model",
    },
}

# Keys whose default is None accept any of these types.
NULLABLE_TYPES = {
    ("training", "exit_loss_weights"): (list,),
}

SEEDED_SECTIONS = ("data", "training", "optimizer")


def _type_ok(value: Any, default: Any, nullable: Tuple[type, ...] = ()) -> bool:
    if value is None:
        return default is None
    if default is None:
        return isinstance(value, nullable)
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, type(default))


def _key_lines(node: yaml.Node) -> Dict[Tuple[str, ...], int]:
    """1-based line of every section and key in a composed YAML document."""
    lines: Dict[Tuple[str, ...], int] = {}
    if not isinstance(node, yaml.MappingNode):
        return lines
    for key_node, value_node in node.value:
        section = str(key_node.value)
        lines[(section,)] = key_node.start_mark.line + 1
        if isinstance(value_node, yaml.MappingNode):
            for sub_key, _ in value_node.value:
                lines[(section, str(sub_key.value))] = sub_key.start_mark.line + 1
    return lines


class RunConfig:
    """Resolved experiment configuration, one dict per section."""

    def __init__(self, sections: Optional[Dict[str, Dict[str, Any]]] = None, source: Optional[str] = None):
        self.sections = copy.deepcopy(DEFAULT_CONFIG)
        self.source = source
        if sections:
            self._merge(sections, {}, source)

    @classmethod
    def from_text(cls, text: str, source: str = "<string>") -> "RunConfig":
        try:
            node = yaml.compose(text)
            data = yaml.safe_load(text)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            raise ConfigError(f"Malformed YAML: {e}", source, mark.line + 1 if mark else None) from e
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("Top level must be a mapping of sections", source, 1)
        config = cls(source=source)
        config._merge(data, _key_lines(node) if node is not None else {}, source)
        return config

    @classmethod
    def load(cls, path: Optional[Union[str, Path]] = None) -> "RunConfig":
        if path is None:
            logger.info("Using default configuration")
            return cls(source=None)
        path = Path(path)
        if not path.exists():
            raise ConfigError("Config file not found", str(path))
        with open(path, "r") as f:
            config = cls.from_text(f.read(), str(path))
        logger.info(f"Configuration loaded from {path}")
        return config

    def _merge(self, data: Dict[str, Any], lines: Dict[Tuple[str, ...], int], source: Optional[str]) -> None:
        for section, values in data.items():
            if section not in DEFAULT_CONFIG:
                raise ConfigError(f"Unknown section '{section}'", source, lines.get((section,)))
            if values is None:
                continue
            if not isinstance(values, dict):
                raise ConfigError(f"Section '{section}' must be a mapping", source, lines.get((section,)))
            for key, value in values.items():
                line = lines.get((section, key))
                if key not in DEFAULT_CONFIG[section]:
                    raise ConfigError(f"Unknown key '{section}.{key}'", source, line)
                default = DEFAULT_CONFIG[section][key]
                if not _type_ok(value, default, NULLABLE_TYPES.get((section, key), ())):
                    raise ConfigError(
                        f"'{section}.{key}' expects {type(default).__name__}, got {type(value).__name__}",
                        source, line,
                    )
                if isinstance(default, float) and value is not None:
                    value = float(value)
                self.sections[section][key] = value

    def __getitem__(self, section: str) -> Dict[str, Any]:
        return self.sections[section]

    def override(self, section: str, key: str, value: Any) -> None:
        """Apply a command-line override; ``None`` leaves the value untouched."""
        if value is None:
            return
        self._merge({section: {key: value}}, {}, "command line")

    def set_seed(self, seed: Optional[int]) -> None:
        if seed is None:
            return
        for section in SEEDED_SECTIONS:
            self.override(section, "seed", int(seed))

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        return copy.deepcopy(self.sections)

    def provenance(self) -> Dict[str, Any]:
        return provenance(self.to_dict())

    def thresholds(self) -> List[float]:
        sweep = self.sections["sweep"]
        return threshold_range(sweep["start"], sweep["stop"], sweep["step"])

    def train_config(self) -> TrainConfig:
        t = self.sections["training"]
        weights = tuple(t["exit_loss_weights"]) if t["exit_loss_weights"] is not None else None
        return TrainConfig(t["epochs"], t["batch_size"], t["learning_rate"], weights, t["seed"])

    def placement(self) -> ExitPlacement:
        return ExitPlacement(tuple(self.sections["exits"]["placement"]))

    def roles(self) -> Tuple[NodeRole, ...]:
        return tuple(NodeRole.parse(r) for r in self.sections["exits"]["roles"])

    def objective_weights(self) -> ObjectiveWeights:
        o = self.sections["optimizer"]
        return ObjectiveWeights(o["w_acc"], o["w_sen"], o["w_com"])

    def ga_config(self) -> GAConfig:
        o = self.sections["optimizer"]
        return GAConfig(o["population_size"], o["generations"], o["crossover_prob"], o["mutation_prob"], o["seed"])

    def power_profile(self) -> PowerProfile:
        p = self.sections["power"]
        return PowerProfile(p["i_sleep"], p["i_infer"], p["i_tx_connected"], p["i_tx_broadcast"],
                            p["t_infer"], p["t_tx"], p["beat_period"])

    def link_profile(self) -> Optional[LinkProfile]:
        links = self.sections["links"]
        if not links["enabled"]:
            return None
        throughput = {NodeRole.parse(role): float(v) for role, v in links["throughput_flops"].items()}
        return LinkProfile(tuple(float(d) for d in links["delay_s"]),
                           tuple(float(b) for b in links["bandwidth_bps"]), throughput)


def threshold_range(start: float, stop: float, step: float) -> List[float]:
    if step <= 0:
        raise InvalidInput(f"Threshold step must be positive, got {step}")
    if not 0.0 <= start <= stop <= 1.0:
        raise InvalidInput(f"Threshold range must satisfy 0 <= start <= stop <= 1, got {start}:{stop}")
    count = int(round((stop - start) / step))
    return [round(start + i * step, 10) for i in range(count + 1)]


def parse_threshold_spec(text: str) -> List[float]:
    """Parse ``start:stop:step`` or a comma list such as ``0.5,0.8``."""
    text = text.strip()
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) != 3:
                raise InvalidInput(f"Threshold range '{text}' must be start:stop:step")
            return threshold_range(*parts)
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise InvalidInput(f"Cannot parse thresholds '{text}'")
