"""Figure rendering for simulator trace CSVs and manifests."""

from .render import (
    Curve,
    RenderResult,
    SchemaError,
    load_curves,
    load_manifest,
    load_trace,
    render_comparison,
    summarize,
)

__version__ = "0.1.0"
