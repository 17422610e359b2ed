from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from config.settings import settings
from domain.exceptions import TrimmedMatchDesignError
from domain.value_objects import RunStatus
from infrastructure.data.records_io import sha256_file, sha256_payload, write_json
from infrastructure.monitoring import run_monitor
from interface.schemas import ErrorReport, RunManifest
import logging

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def error_report(error: BaseException) -> ErrorReport:
    """Machine-parseable category for any failure reaching the command line"""
    if isinstance(error, TrimmedMatchDesignError):
        category = error.category
    elif isinstance(error, (ValidationError, ValueError)):
        category = "invalid_input"
    elif isinstance(error, OSError):
        category = "io"
    else:
        category = "internal"
    return ErrorReport(category=category, message=str(error).strip() or type(error).__name__)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class RunRecorder:
    """Writes `manifest.json` as incomplete before any output, then marks it
    complete (or failed) once outputs are final"""

    command: str
    out_dir: Path
    effective_config: Dict[str, Any]
    run_id: str
    seed: Optional[int] = None
    input_paths: List[Path] = field(default_factory=list)
    outputs: Dict[str, Path] = field(default_factory=dict)
    manifest: Optional[RunManifest] = None

    @property
    def manifest_path(self) -> Path:
        return self.out_dir / MANIFEST_NAME

    @contextmanager
    def running(self):
        self.start()
        try:
            yield self
        except Exception as e:
            report = error_report(e)
            self.fail(report.category, report.message)
            raise
        self.complete()

    def start(self) -> "RunRecorder":
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(
            command=self.command,
            tool_version=settings.TOOL_VERSION,
            seed=self.seed,
            config_sha256=sha256_payload(self.effective_config),
            effective_config=self.effective_config,
            inputs={str(p): sha256_file(p) for p in self.input_paths},
            started_at=_now(),
        )
        self._write()
        return self

    def output(self, name: str, filename: str) -> Path:
        """Register an output file and return its path"""
        path = self.out_dir / filename
        self.outputs[name] = path
        return path

    def complete(self) -> None:
        self.manifest.status = RunStatus.COMPLETE
        self._finalize()
        logger.info(f"{self.command}: wrote {len(self.outputs)} outputs to {self.out_dir}")

    def fail(self, category: str, message: str) -> None:
        self.manifest.status = RunStatus.FAILED
        self.manifest.error = ErrorReport(category=category, message=message)
        self._finalize()

    def _finalize(self) -> None:
        self.manifest.outputs = {name: str(path) for name, path in self.outputs.items()}
        self.manifest.output_sha256 = {
            name: sha256_file(path) for name, path in self.outputs.items() if path.exists()
        }
        self.manifest.finished_at = _now()
        self.manifest.timeline = run_monitor.get_execution_timeline(self.run_id)
        self._write()
        run_monitor.clear_run(self.run_id)

    def _write(self) -> None:
        write_json(self.manifest.model_dump(mode="json"), self.manifest_path)
