"""landpatch: a land-surface patch classification workbench.

Pipeline stages, each its own module: geo-referenced grids (geogrid),
raster splitting and tile fetching (imagery), labeled datasets (dataset),
seeded geometric augmentation (augment), a small trainable CNN (nn),
evaluation metrics (metrics), prediction runs (inference), occlusion
heatmaps (explain), CSV/JSON/HTML-map exports (export), an HTTP service
(service), and a CLI (cli).
"""

__version__ = "0.1.0"
