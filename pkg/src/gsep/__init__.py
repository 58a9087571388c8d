"""Multi-component image separation and inpainting with frame l1-analysis."""
