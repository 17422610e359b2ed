from .commands import COMMANDS, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_OK, EXIT_USAGE
from .run_recorder import RunRecorder, error_report

__all__ = ["COMMANDS", "EXIT_ERROR", "EXIT_INFEASIBLE", "EXIT_OK", "EXIT_USAGE", "RunRecorder", "error_report"]
