import logging
from pathlib import Path

import plotly.graph_objects as go
from plotly.subplots import make_subplots

logger = logging.getLogger(__name__)

COLORS = ["blue", "red", "green", "orange", "purple", "brown"]


def create_turn_figure(f1_by_strategy, tokens_by_strategy, token_budget=None):
    """
    Builds a two-panel figure: F1 per turn on top, memory tokens per turn below

    Args:
        f1_by_strategy (dict): Strategy name -> list of F1 values (0-1), one per turn
        tokens_by_strategy (dict): Strategy name -> list of memory token counts, one per turn
        token_budget (int): Optional K, drawn as a dashed line on the token panel

    Returns:
        go.Figure: The figure
    """
    fig = make_subplots(
        rows=2, cols=1, shared_xaxes=True, vertical_spacing=0.08,
        subplot_titles=("F1 per Turn", "Memory Tokens per Turn"),
    )

    names = list(dict.fromkeys(list(f1_by_strategy) + list(tokens_by_strategy)))
    for index, name in enumerate(names):
        color = COLORS[index % len(COLORS)]
        f1 = f1_by_strategy.get(name) or []
        if f1:
            fig.add_trace(go.Scatter(
                x=list(range(1, len(f1) + 1)),
                y=[100 * value for value in f1],
                mode='markers+lines',
                name=f"{name} F1",
                legendgroup=name,
                marker=dict(size=8, color=color)
            ), row=1, col=1)
        tokens = tokens_by_strategy.get(name) or []
        if tokens:
            fig.add_trace(go.Scatter(
                x=list(range(1, len(tokens) + 1)),
                y=tokens,
                mode='lines',
                name=f"{name} tokens",
                legendgroup=name,
                line=dict(color=color, dash='dot')
            ), row=2, col=1)

    if token_budget:
        fig.add_hline(y=token_budget, line_width=2, line_dash="dash", line_color="gray", row=2, col=1)

    fig.update_layout(
        title="Incremental Summarization by Turn",
        legend=dict(yanchor="top", y=0.99, xanchor="left", x=1.01),
        height=700
    )
    fig.update_xaxes(title_text="Turn (paragraph)", row=2, col=1)
    fig.update_yaxes(title_text="F1 (%)", range=[0, 100], row=1, col=1)
    fig.update_yaxes(title_text="Tokens", row=2, col=1)
    return fig


def plot_turn_curves(f1_by_strategy, tokens_by_strategy, path, token_budget=None):
    """
    Writes the per-turn chart as a standalone HTML file

    Args:
        f1_by_strategy (dict): Strategy name -> per-turn F1 values
        tokens_by_strategy (dict): Strategy name -> per-turn memory token counts
        path (str | Path): Output .html file
        token_budget (int): Optional K to mark on the token panel

    Returns:
        Path: The written file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig = create_turn_figure(f1_by_strategy, tokens_by_strategy, token_budget)
    fig.write_html(str(path), include_plotlyjs="cdn")
    logger.info("Wrote turn chart to %s", path)
    return path
