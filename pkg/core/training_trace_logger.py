"""
Training Trace Logger Module

Structured JSON traces of training runs: one entry per random restart with
its per-pass loss and validation score, the selected snapshot, why training
stopped, and timing. Traces sit beside the reports but never feed into them,
so wall-clock fields do not affect report determinism.
"""

import json
import threading
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional


class RestartStatus(str, Enum):
    """Restart execution status."""
    RUNNING = "running"
    SUCCESS = "success"
    ABORTED = "aborted"


@dataclass
class PassTrace:
    """Measurements taken after one pass over the training data."""
    pass_no: int
    loss: float
    score: float
    rejected_updates: int = 0


@dataclass
class RestartTrace:
    """Trace information for a single restart."""
    restart: int
    seed: int
    status: RestartStatus
    start_time: Optional[str] = None
    end_time: Optional[str] = None
    duration_sec: Optional[float] = None
    best_pass: Optional[int] = None
    best_score: Optional[float] = None
    stop_reason: Optional[str] = None
    error: Optional[str] = None
    passes: List[PassTrace] = field(default_factory=list)


@dataclass
class TrainingTrace:
    """Complete trace of one training run."""
    trace_id: str
    kind: str
    mode: str
    start_time: str
    end_time: Optional[str] = None
    duration_sec: Optional[float] = None
    status: str = "running"
    selected_restart: Optional[int] = None
    restarts: Dict[int, RestartTrace] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)
    config: Dict[str, Any] = field(default_factory=dict)


class TrainingTraceLogger:
    """Writes training traces as JSON; safe to share between restart workers."""

    def __init__(self, logs_dir: Optional[Path] = None):
        """
        Initialize the trace logger.

        Args:
            logs_dir: Directory for trace files (default: logs/traces)
        """
        self.logs_dir = Path(logs_dir) if logs_dir else Path("logs/traces")
        self.logs_dir.mkdir(parents=True, exist_ok=True)
        self.current_trace: Optional[TrainingTrace] = None
        self._start_times: Dict[int, float] = {}
        self._lock = threading.Lock()

    def start_run(self, trace_id: str, kind: str, mode: str, config: Optional[Dict[str, Any]] = None) -> TrainingTrace:
        with self._lock:
            self._start_times.clear()
            self.current_trace = TrainingTrace(
                trace_id=trace_id,
                kind=kind,
                mode=mode,
                start_time=datetime.now().isoformat(),
                config=config or {},
            )
            self._write_trace()
            return self.current_trace

    def start_restart(self, restart: int, seed: int) -> None:
        with self._lock:
            if not self.current_trace:
                return
            self.current_trace.restarts[restart] = RestartTrace(
                restart=restart,
                seed=seed,
                status=RestartStatus.RUNNING,
                start_time=datetime.now().isoformat(),
            )
            self._start_times[restart] = time.time()
            self._write_trace()

    def record_pass(self, restart: int, pass_no: int, loss: float, score: float, rejected_updates: int = 0) -> None:
        with self._lock:
            if not self.current_trace or restart not in self.current_trace.restarts:
                return
            self.current_trace.restarts[restart].passes.append(
                PassTrace(pass_no=pass_no, loss=loss, score=score, rejected_updates=rejected_updates))
            self._write_trace()

    def complete_restart(self, restart: int, status: RestartStatus, best_pass: Optional[int] = None,
                         best_score: Optional[float] = None, stop_reason: Optional[str] = None,
                         error: Optional[str] = None) -> None:
        with self._lock:
            if not self.current_trace or restart not in self.current_trace.restarts:
                return
            entry = self.current_trace.restarts[restart]
            entry.status = status
            entry.end_time = datetime.now().isoformat()
            if restart in self._start_times:
                entry.duration_sec = round(time.time() - self._start_times.pop(restart), 2)
            entry.best_pass = best_pass
            entry.best_score = best_score
            entry.stop_reason = stop_reason
            if error:
                entry.error = error
                self.current_trace.warnings.append(f"Restart {restart}: {error}")
            self._write_trace()

    def complete_run(self, selected_restart: Optional[int], status: str = "success") -> None:
        with self._lock:
            if not self.current_trace:
                return
            self.current_trace.end_time = datetime.now().isoformat()
            self.current_trace.status = status
            self.current_trace.selected_restart = selected_restart
            start_dt = datetime.fromisoformat(self.current_trace.start_time)
            end_dt = datetime.fromisoformat(self.current_trace.end_time)
            self.current_trace.duration_sec = round((end_dt - start_dt).total_seconds(), 2)
            self._write_trace()

    def get_trace_path(self, trace_id: Optional[str] = None) -> Path:
        if not trace_id and self.current_trace:
            trace_id = self.current_trace.trace_id
        return self.logs_dir / f"trace_{trace_id}.json"

    def _write_trace(self) -> None:
        if not self.current_trace:
            return
        trace_dict = asdict(self.current_trace)
        for entry in trace_dict.get("restarts", {}).values():
            if isinstance(entry.get("status"), RestartStatus):
                entry["status"] = entry["status"].value
        with open(self.get_trace_path(), 'w') as f:
            json.dump(trace_dict, f, indent=2, default=str)

    def load_trace(self, trace_id: str) -> Optional[Dict[str, Any]]:
        trace_path = self.get_trace_path(trace_id)
        if trace_path.exists():
            with open(trace_path) as f:
                return json.load(f)
        return None
