"""Tool configuration: flat key = value files, presets, and secrets.

Config files never hold API keys, only the names of environment variables
that hold them. Unknown keys are rejected so typos fail fast.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .clients import ClientConfig
from .errors import ConfigError
from .optimizer import OptimizationConfig


def parse_flat_config(text: str, path: str = "<config>") -> dict[str, str]:
    """Parse `key = value` lines; '#' starts a comment, blanks are skipped."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _parse_bool(value: str, key: str) -> bool:
    lowered = value.lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"{key}: cannot parse {value!r} as a boolean")


@dataclass(frozen=True)
class ToolConfig:
    """Everything the CLI needs to talk to endpoints and run the optimizer."""

    chat_base_url: str = "https://api.openai.com"
    chat_model: str = "gpt-4.1-nano"
    chat_api_key_env: str = "OPENAI_API_KEY"
    temperature: float = 0.1
    embed_base_url: str = "https://api.openai.com"
    embed_model: str = "text-embedding-3-small"
    embed_api_key_env: str = "OPENAI_API_KEY"
    lambda_p: float = 1.0
    lambda_n: float = 1.0
    lambda_o: float = 0.2
    steps: int = 20
    learning_rate: float = 0.05
    normalize_inputs: bool = True
    max_subqueries: int = 8
    batch_size: int = 64
    concurrency: int = 4
    cache_dir: str = ".deo-cache"
    timeout: float = 60.0
    max_retries: int = 3

    @classmethod
    def from_mapping(cls, mapping: dict[str, str], path: str = "<config>") -> "ToolConfig":
        known = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, value in mapping.items():
            if key not in known:
                raise ConfigError(f"{path}: unknown config key {key!r}")
            kind = known[key]
            try:
                if kind == "bool":
                    kwargs[key] = _parse_bool(value, key)
                elif kind == "int":
                    kwargs[key] = int(value)
                elif kind == "float":
                    kwargs[key] = float(value)
                else:
                    kwargs[key] = value
            except ValueError:
                raise ConfigError(f"{path}: key {key!r} has invalid value {value!r}") from None
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "ToolConfig":
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
        return cls.from_mapping(parse_flat_config(text, str(path)), str(path))

    def with_preset(self, preset: str) -> "ToolConfig":
        """Apply a named lambda preset; 'text' keeps the anchor weight low,
        'multimodal' raises it to 1.0."""
        if preset == "text":
            return replace(self, lambda_p=1.0, lambda_n=1.0, lambda_o=0.2)
        if preset == "multimodal":
            return replace(self, lambda_p=1.0, lambda_n=1.0, lambda_o=1.0)
        raise ConfigError(f"unknown preset {preset!r} (expected 'text' or 'multimodal')")

    def optimization_config(self, steps: int | None = None) -> OptimizationConfig:
        return OptimizationConfig(
            lambda_p=self.lambda_p,
            lambda_n=self.lambda_n,
            lambda_o=self.lambda_o,
            steps=self.steps if steps is None else steps,
            learning_rate=self.learning_rate,
            normalize_inputs=self.normalize_inputs,
        )

    def chat_client_config(self) -> ClientConfig:
        return ClientConfig(
            base_url=self.chat_base_url,
            api_key_env=self.chat_api_key_env,
            timeout=self.timeout,
            max_retries=self.max_retries,
        )

    def embed_client_config(self) -> ClientConfig:
        return ClientConfig(
            base_url=self.embed_base_url,
            api_key_env=self.embed_api_key_env,
            timeout=self.timeout,
            max_retries=self.max_retries,
        )
