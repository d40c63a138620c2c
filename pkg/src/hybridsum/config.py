"""Run configuration: documented JSON schema, validation, env overrides.

Schema (all keys except `corpus` and `output_dir` are optional):

    {
      "corpus": "corpus.jsonl",
      "output_dir": "results",
      "seed": 7,
      "split": {"ratios": [0.9, 0.05, 0.05], "resplit": false},
      "bm25": {"k1": 1.2, "b": 0.75},
      "router": {"kind": "lexical", "threshold": 0.4},
      "generator": {"transport": "subprocess",
                    "command": ["python", "backend.py"],
                    "timeout": 30, "max_in_flight": 4},
      "classifier": { ... same shape as generator ... },
      "metrics": {"max_n": 4, "smoothing": "none"},
      "systems": ["ir", "nmt", "combined", "oracle"]
    }

File-transport backends replace `command` with `requests_path` /
`responses_path` (an optional `command` is then run once per batch).

Environment overrides (applied after the file is parsed):
    HYBRIDSUM_GENERATOR_CMD    shell-style generator command
    HYBRIDSUM_CLASSIFIER_CMD   shell-style classifier command
    HYBRIDSUM_BACKEND_TIMEOUT  timeout in seconds for both backends
"""

from __future__ import annotations

import json
import os
import shlex
from dataclasses import dataclass, field, replace
from pathlib import Path

from .backend import GeneratorHandle
from .errors import ConfigError, ProtocolError
from .metrics import BleuConfig
from .router import RouterConfig

ENV_GENERATOR_CMD = "HYBRIDSUM_GENERATOR_CMD"
ENV_CLASSIFIER_CMD = "HYBRIDSUM_CLASSIFIER_CMD"
ENV_BACKEND_TIMEOUT = "HYBRIDSUM_BACKEND_TIMEOUT"

_TOP_LEVEL_KEYS = {
    "corpus", "output_dir", "seed", "split", "bm25", "router",
    "generator", "classifier", "metrics", "systems",
}


@dataclass(frozen=True)
class RunConfig:
    corpus_path: str
    output_dir: str
    seed: int = 0
    ratios: tuple[float, float, float] = (0.9, 0.05, 0.05)
    resplit: bool = False
    bm25_k1: float = 1.2
    bm25_b: float = 0.75
    router: RouterConfig = field(default_factory=RouterConfig)
    generator: GeneratorHandle | None = None
    classifier: GeneratorHandle | None = None
    bleu: BleuConfig = field(default_factory=BleuConfig)
    systems: tuple[str, ...] = ("ir", "nmt", "combined", "oracle")


def _expect(mapping: dict, key: str, kind, path: str, default=None, required=False):
    if key not in mapping:
        if required:
            raise ConfigError(path, "is required")
        return default
    value = mapping[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ConfigError(path, f"expected {kind.__name__}, got {type(value).__name__}")
    return value


def _parse_handle(section: dict, path: str) -> GeneratorHandle:
    if not isinstance(section, dict):
        raise ConfigError(path, "must be an object")
    allowed = {"transport", "command", "requests_path", "responses_path",
               "timeout", "max_in_flight"}
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}", "unknown key")
    transport = _expect(section, "transport", str, f"{path}.transport", default="subprocess")
    command = section.get("command")
    if command is not None and (
        not isinstance(command, list) or not all(isinstance(c, str) for c in command)
    ):
        raise ConfigError(f"{path}.command", "must be a list of strings")
    try:
        return GeneratorHandle(
            transport=transport,
            command=tuple(command) if command else None,
            requests_path=_expect(section, "requests_path", str, f"{path}.requests_path"),
            responses_path=_expect(section, "responses_path", str, f"{path}.responses_path"),
            timeout=_expect(section, "timeout", float, f"{path}.timeout", default=30.0),
            max_in_flight=_expect(section, "max_in_flight", int, f"{path}.max_in_flight", default=4),
        )
    except ProtocolError as exc:
        raise ConfigError(path, str(exc)) from exc


def parse_run_config(payload: dict, base_dir: Path | None = None) -> RunConfig:
    """Validate a parsed config object; errors name the offending key path."""
    if not isinstance(payload, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    for key in payload:
        if key not in _TOP_LEVEL_KEYS:
            raise ConfigError(key, "unknown key")

    corpus_path = _expect(payload, "corpus", str, "corpus", required=True)
    output_dir = _expect(payload, "output_dir", str, "output_dir", required=True)
    if base_dir is not None:
        corpus_path = str((base_dir / corpus_path))
        output_dir = str((base_dir / output_dir))
    seed = _expect(payload, "seed", int, "seed", default=0)

    ratios = (0.9, 0.05, 0.05)
    resplit = False
    if "split" in payload:
        section = payload["split"]
        if not isinstance(section, dict):
            raise ConfigError("split", "must be an object")
        for key in section:
            if key not in {"ratios", "resplit"}:
                raise ConfigError(f"split.{key}", "unknown key")
        raw = section.get("ratios")
        if raw is not None:
            if (not isinstance(raw, list) or len(raw) != 3
                    or not all(isinstance(r, (int, float)) and not isinstance(r, bool) for r in raw)):
                raise ConfigError("split.ratios", "must be a list of 3 numbers")
            ratios = tuple(float(r) for r in raw)
        resplit = _expect(section, "resplit", bool, "split.resplit", default=False)

    k1, b = 1.2, 0.75
    if "bm25" in payload:
        section = payload["bm25"]
        if not isinstance(section, dict):
            raise ConfigError("bm25", "must be an object")
        for key in section:
            if key not in {"k1", "b"}:
                raise ConfigError(f"bm25.{key}", "unknown key")
        k1 = _expect(section, "k1", float, "bm25.k1", default=1.2)
        b = _expect(section, "b", float, "bm25.b", default=0.75)

    router = RouterConfig()
    if "router" in payload:
        section = payload["router"]
        if not isinstance(section, dict):
            raise ConfigError("router", "must be an object")
        for key in section:
            if key not in {"kind", "threshold"}:
                raise ConfigError(f"router.{key}", "unknown key")
        router = RouterConfig(
            kind=_expect(section, "kind", str, "router.kind", default="lexical"),
            threshold=_expect(section, "threshold", float, "router.threshold", default=0.40),
        )

    generator = classifier = None
    if "generator" in payload:
        generator = _parse_handle(payload["generator"], "generator")
    if "classifier" in payload:
        classifier = _parse_handle(payload["classifier"], "classifier")

    bleu = BleuConfig()
    if "metrics" in payload:
        section = payload["metrics"]
        if not isinstance(section, dict):
            raise ConfigError("metrics", "must be an object")
        for key in section:
            if key not in {"max_n", "smoothing", "epsilon"}:
                raise ConfigError(f"metrics.{key}", "unknown key")
        try:
            bleu = BleuConfig(
                max_n=_expect(section, "max_n", int, "metrics.max_n", default=4),
                smoothing=_expect(section, "smoothing", str, "metrics.smoothing", default="none"),
                epsilon=_expect(section, "epsilon", float, "metrics.epsilon", default=1e-9),
            )
        except Exception as exc:
            raise ConfigError("metrics", str(exc)) from exc

    systems: tuple[str, ...] = ("ir", "nmt", "combined", "oracle")
    if "systems" in payload:
        raw = payload["systems"]
        if not isinstance(raw, list) or not raw or not all(isinstance(s, str) for s in raw):
            raise ConfigError("systems", "must be a nonempty list of system names")
        systems = tuple(raw)

    config = RunConfig(
        corpus_path=corpus_path,
        output_dir=output_dir,
        seed=seed,
        ratios=ratios,
        resplit=resplit,
        bm25_k1=k1,
        bm25_b=b,
        router=router,
        generator=generator,
        classifier=classifier,
        bleu=bleu,
        systems=systems,
    )
    return _apply_env_overrides(config)


def _override_handle(handle: GeneratorHandle | None, command: list[str] | None,
                     timeout: float | None) -> GeneratorHandle | None:
    if command is not None:
        base = handle if handle is not None else GeneratorHandle(command=("placeholder",))
        handle = replace(base, transport="subprocess", command=tuple(command))
    if handle is not None and timeout is not None:
        handle = replace(handle, timeout=timeout)
    return handle


def _apply_env_overrides(config: RunConfig) -> RunConfig:
    gen_cmd = os.environ.get(ENV_GENERATOR_CMD)
    cls_cmd = os.environ.get(ENV_CLASSIFIER_CMD)
    timeout_raw = os.environ.get(ENV_BACKEND_TIMEOUT)
    timeout = None
    if timeout_raw is not None:
        try:
            timeout = float(timeout_raw)
        except ValueError:
            raise ConfigError(ENV_BACKEND_TIMEOUT, f"not a number: {timeout_raw!r}") from None
        if timeout <= 0:
            raise ConfigError(ENV_BACKEND_TIMEOUT, "must be positive")
    generator = _override_handle(
        config.generator, shlex.split(gen_cmd) if gen_cmd else None, timeout
    )
    classifier = _override_handle(
        config.classifier, shlex.split(cls_cmd) if cls_cmd else None, timeout
    )
    if generator is not config.generator or classifier is not config.classifier:
        config = replace(config, generator=generator, classifier=classifier)
    return config


def load_run_config(path: str | Path) -> RunConfig:
    """Read and validate a config file; paths resolve relative to it."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(str(path), "config file not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON: {exc.msg} (line {exc.lineno})") from exc
    return parse_run_config(payload, base_dir=path.parent)
