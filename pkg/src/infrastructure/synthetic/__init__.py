from .panel_generator import SyntheticPanelGenerator, generate_panel, geo_sizes

__all__ = ["SyntheticPanelGenerator", "generate_panel", "geo_sizes"]
