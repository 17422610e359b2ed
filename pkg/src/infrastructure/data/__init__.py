from .csv_panel_repository import CsvPanelRepository, load_panel, write_panel

__all__ = ["CsvPanelRepository", "load_panel", "write_panel"]
