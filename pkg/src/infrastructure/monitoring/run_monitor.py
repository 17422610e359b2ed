import logging
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from datetime import datetime
from enum import Enum
from itertools import count
from typing import Any, Dict, List, Optional


class RunEventType(Enum):
    STAGE_START = "stage_start"
    STAGE_END = "stage_end"
    DECISION_MADE = "decision_made"
    ERROR_OCCURRED = "error_occurred"


@dataclass
class RunEvent:
    event_id: str
    run_id: str
    stage: str
    event_type: RunEventType
    timestamp: datetime
    duration_ms: Optional[float] = None
    input_data: Optional[Dict] = None
    output_data: Optional[Dict] = None
    metadata: Dict[str, Any] = field(default_factory=dict)


class RunMonitor:
    """Timeline of pipeline stages and decisions for one or more runs.

    Events carry wall-clock timestamps, so the timeline goes into the run
    manifest only and never into result files.
    """

    def __init__(self):
        self.events: List[RunEvent] = []
        self._ids = count(1)
        self.logger = logging.getLogger("run_monitor")

        handler = logging.StreamHandler()
        formatter = logging.Formatter('%(asctime)s - [%(name)s] - %(levelname)s - %(message)s')
        handler.setFormatter(formatter)
        if not self.logger.handlers:
            self.logger.addHandler(handler)
        self.logger.propagate = False
        self.logger.setLevel(logging.INFO)

    def generate_event_id(self) -> str:
        return f"evt_{next(self._ids):06d}"

    @contextmanager
    def track_stage(self, run_id: str, stage: str, input_data: Dict = None):
        """Context manager to track one pipeline stage"""
        event_id = self.generate_event_id()
        start_time = time.perf_counter()
        self.events.append(
            RunEvent(
                event_id=event_id,
                run_id=run_id,
                stage=stage,
                event_type=RunEventType.STAGE_START,
                timestamp=datetime.now(),
                input_data=input_data or {},
            )
        )
        self.logger.info(f"▶ {stage} started")

        try:
            yield event_id
        except Exception as e:
            duration_ms = (time.perf_counter() - start_time) * 1000
            self.events.append(
                RunEvent(
                    event_id=self.generate_event_id(),
                    run_id=run_id,
                    stage=stage,
                    event_type=RunEventType.ERROR_OCCURRED,
                    timestamp=datetime.now(),
                    duration_ms=duration_ms,
                    metadata={"error": str(e), "category": getattr(e, "category", type(e).__name__), "parent_event": event_id},
                )
            )
            self.logger.error(f"✖ {stage} failed - {e}")
            raise

        duration_ms = (time.perf_counter() - start_time) * 1000
        self.events.append(
            RunEvent(
                event_id=self.generate_event_id(),
                run_id=run_id,
                stage=stage,
                event_type=RunEventType.STAGE_END,
                timestamp=datetime.now(),
                duration_ms=duration_ms,
                metadata={"parent_event": event_id},
            )
        )
        self.logger.info(f"✔ {stage} completed - {duration_ms:.1f}ms")

    def log_decision(self, run_id: str, stage: str, decision_type: str, decision_data: Dict, reasoning: str = None):
        self.events.append(
            RunEvent(
                event_id=self.generate_event_id(),
                run_id=run_id,
                stage=stage,
                event_type=RunEventType.DECISION_MADE,
                timestamp=datetime.now(),
                output_data=decision_data or {},
                metadata={"decision_type": decision_type, "reasoning": reasoning or ""},
            )
        )
        self.logger.info(f"{stage}: {decision_type} {reasoning or ''}".rstrip())

    def get_execution_timeline(self, run_id: str) -> List[Dict]:
        """Chronological, JSON-ready events of a run"""
        timeline = []
        for event in sorted((e for e in self.events if e.run_id == run_id), key=lambda e: e.timestamp):
            record = asdict(event)
            record["event_type"] = event.event_type.value
            record["timestamp"] = event.timestamp.isoformat()
            timeline.append(record)
        return timeline

    def clear_run(self, run_id: str) -> int:
        """Drop a finished run's events; returns how many were removed"""
        kept = [e for e in self.events if e.run_id != run_id]
        removed = len(self.events) - len(kept)
        self.events = kept
        return removed

    def get_stage_performance_stats(self, run_id: Optional[str] = None) -> Dict[str, Dict[str, float]]:
        stats: Dict[str, Dict[str, float]] = {}
        for event in self.events:
            if run_id and event.run_id != run_id:
                continue
            if event.event_type not in (RunEventType.STAGE_END, RunEventType.ERROR_OCCURRED):
                continue
            entry = stats.setdefault(event.stage, {"executions": 0, "failures": 0, "total_duration_ms": 0.0})
            entry["executions"] += 1
            if event.event_type == RunEventType.ERROR_OCCURRED:
                entry["failures"] += 1
            entry["total_duration_ms"] += event.duration_ms or 0.0
        for entry in stats.values():
            entry["avg_duration_ms"] = entry["total_duration_ms"] / entry["executions"]
        return stats


# Global monitor instance
run_monitor = RunMonitor()
