from .run_monitor import RunMonitor, run_monitor, RunEventType

__all__ = ['RunMonitor', 'run_monitor', 'RunEventType']
