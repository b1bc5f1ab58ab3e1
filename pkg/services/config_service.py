import logging
from typing import Any, Dict, Tuple

from pydantic import ValidationError

from errors import ConfigValidationError, ParseError
from schemas import RunConfig

logger = logging.getLogger(__name__)

# config key -> (section, model field)
TOP_LEVEL_KEYS = [
    "N", "M", "nu", "mode", "epsilon", "boundary", "outputs",
    "inner_tol", "outer_tol", "max_inner", "max_sweeps",
    "line_scheme", "seed", "relaxation", "quadrature", "scaling",
]
SECTION_KEYS: Dict[str, Tuple[str, str]] = {
    "shape.cos": ("shape", "fourier_cosine"),
    "shape.sin": ("shape", "fourier_sine"),
    "fit.target": ("fit", "target"),
    "fit.max_iterations": ("fit", "max_iterations"),
    "fit.quadrature": ("fit", "quadrature"),
    "fit.scaling": ("fit", "scaling"),
    "fit.seed_with_solver": ("fit", "seed_with_solver"),
    "fit.threads": ("fit", "threads"),
    "theorem.nodes": ("theorem", "nodes"),
    "theorem.w1": ("theorem", "w1"),
    "theorem.forcing": ("theorem", "forcing"),
    "theorem.nu": ("theorem", "nu"),
    "theorem.refinement_nodes": ("theorem", "refinement_nodes"),
}
LIST_KEYS = {"shape.cos", "shape.sin", "theorem.refinement_nodes"}


class ConfigService:
    """Flat `key = value` run configuration files."""

    def parse_config(self, text: str) -> RunConfig:
        values: Dict[str, Any] = {}
        seen: Dict[str, int] = {}

        for number, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(number, f"expected 'key = value', got '{line}'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in TOP_LEVEL_KEYS and key not in SECTION_KEYS:
                raise ParseError(number, f"unknown key '{key}'")
            if key in seen:
                raise ParseError(number, f"duplicate key '{key}' (first set on line {seen[key]})")
            if not value:
                raise ParseError(number, f"missing value for '{key}'")
            seen[key] = number

            if key in LIST_KEYS:
                value = [item.strip() for item in value.split(",") if item.strip()]
            if key in SECTION_KEYS:
                section, name = SECTION_KEYS[key]
                values.setdefault(section, {})[name] = value
            else:
                values[key] = value

        try:
            run_config = RunConfig(**values)
        except ValidationError as e:
            error = e.errors()[0]
            raise ConfigValidationError(self._field_name(error.get("loc", ())), error.get("msg", str(e)))
        logger.debug("parsed configuration with keys %s", sorted(seen))
        return run_config

    def load_config(self, path: str) -> RunConfig:
        try:
            with open(path, encoding="utf-8") as f:
                text = f.read()
        except OSError as e:
            raise ParseError(0, f"cannot read configuration '{path}': {e}")
        return self.parse_config(text)

    @staticmethod
    def _field_name(loc) -> str:
        """Config key for a pydantic error location; model-level checks concern the closure mode."""
        parts = [str(p) for p in loc if not isinstance(p, int)]
        if not parts:
            return "mode"
        if len(parts) >= 2:
            for key, (section, name) in SECTION_KEYS.items():
                if (section, name) == (parts[0], parts[1]):
                    return key
        return ".".join(parts)


# Global config service instance
config_service = ConfigService()
