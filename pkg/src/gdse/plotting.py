"""Static SVG line charts with +-1 SE bands."""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

plt.rcParams["svg.hashsalt"] = "gdse"

COLORS = {"gaussian": "tab:green", "t10": "tab:red"}


def _band(ax, t, mean, se, label, color, style="-"):
    ax.plot(t, mean, style, color=color, label=label, lw=1.4)
    ax.fill_between(t, mean - se, mean + se, color=color, alpha=0.2, lw=0)


def panel_svg(path, title, series, reldist=None):
    """series: list of (label, color, t, hat_mean, hat_se, mc_mean, mc_se).

    reldist: optional list of (label, t, mean, se) for a lower subplot.
    """
    nrows = 2 if reldist else 1
    fig, axes = plt.subplots(nrows, 1, figsize=(5, 3.2 * nrows), squeeze=False)
    ax = axes[0, 0]
    for label, color, t, hm, hs, mm, ms in series:
        _band(ax, t, mm, ms, f"test error ({label})", color, "-")
        _band(ax, t, hm, hs, f"estimate ({label})", color, "--")
    ax.set_xlabel("iteration")
    ax.set_ylabel("generalization error")
    ax.set_title(title)
    ax.legend(fontsize=7)
    if reldist:
        ax = axes[1, 0]
        for i, (label, t, mean, se) in enumerate(reldist):
            _band(ax, t, mean, se, label, f"C{i}")
        ax.set_xlabel("iteration")
        ax.set_ylabel("relative distance")
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
