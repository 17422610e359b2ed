from domain.entities import SynthConfig
from domain.interfaces import PanelRepository
from .data import CsvPanelRepository
from .synthetic import SyntheticPanelGenerator

def create_panel_repository() -> PanelRepository:
    """Create the pretest panel repository"""
    return CsvPanelRepository()

def create_synthetic_generator(cfg: SynthConfig) -> SyntheticPanelGenerator:
    """Create a synthetic panel generator for one config"""
    return SyntheticPanelGenerator(cfg)
