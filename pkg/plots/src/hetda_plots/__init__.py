from .render import RenderError, plot_convergence, plot_embedding

__all__ = ["RenderError", "plot_convergence", "plot_embedding"]
