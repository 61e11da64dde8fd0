"""Experiment configuration, replicated training runs, SE curves and figures."""
import csv
import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import augmented_gd as ag
from . import data_model as dm
from . import evaluation as ev
from . import network as nw
from . import state_evolution as se
from .activations import layer_acts, names, registry_get
from .rng import stream

MODES = ("train", "se", "both", "verify", "figure")
MODELS = ("single", "multi")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    m: int = 300
    n: int = 600
    q: int = 10
    L: int = 2
    activation: str = "sigmoid"
    link: str = "tanh"
    eta: list = field(default_factory=lambda: [2.0])
    sigma_xi: float = 0.5
    iters: int = 70
    reps: int = 120
    feature_dist: str = "gaussian"
    seed: int = 0
    mc_samples: int = 20000
    test_samples: int = 20000
    model: str = "single"
    index_dim: int = 10
    fix_init: bool = False   # share W0 and xi across reps (needed to compare with SE)
    mode: str = "train"

    def validate(self):
        def bad(name, msg):
            raise ConfigError(f"{name}: {msg}")

        for name in ("m", "n", "q", "reps", "mc_samples", "index_dim"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                bad(name, f"must be an integer >= 1, got {v!r}")
        if not isinstance(self.L, int) or self.L < 2:
            bad("L", f"must be an integer >= 2, got {self.L!r}")
        if not isinstance(self.iters, int) or self.iters < 0:
            bad("iters", f"must be an integer >= 0, got {self.iters!r}")
        if not isinstance(self.test_samples, int) or self.test_samples < 2:
            bad("test_samples", "must be an integer >= 2")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            bad("seed", "must be a 64-bit non-negative integer")
        for name in ("activation", "link"):
            if getattr(self, name) not in names():
                bad(name, f"unknown function {getattr(self, name)!r}; choose from {list(names())}")
        etas = self.eta_per_layer()
        if len(etas) != self.L or any(not e > 0 for e in etas):
            bad("eta", f"need one positive rate or {self.L} positive rates, got {self.eta!r}")
        if not self.sigma_xi >= 0:
            bad("sigma_xi", "must be non-negative")
        try:
            dm.FeatureDist.parse(self.feature_dist)
        except ValueError as e:
            bad("feature_dist", str(e))
        if self.model not in MODELS:
            bad("model", f"must be one of {MODELS}")
        if self.mode not in MODES:
            bad("mode", f"must be one of {MODES}")
        if self.model == "multi" and self.mode in ("se", "both"):
            bad("mode", "state evolution covers the single-index model only")
        return self

    def eta_per_layer(self):
        e = self.eta if isinstance(self.eta, (list, tuple)) else [self.eta]
        e = [float(x) for x in e]
        return e * self.L if len(e) == 1 else e

    @property
    def acts(self):
        return layer_acts(self.activation, self.L)

    def to_dict(self):
        return dataclasses.asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"{unknown[0]}: unknown config field")
        d = dict(d)
        if "eta" in d and not isinstance(d["eta"], list):
            d["eta"] = [d["eta"]]
        return cls(**d).validate()

    @classmethod
    def from_json(cls, text):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config: invalid JSON ({e})") from None
        if not isinstance(d, dict):
            raise ConfigError("config: top level must be an object")
        return cls.from_dict(d)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw).validate()


# ---- one replication ----------------------------------------------------

def make_signal(cfg):
    r = stream(cfg.seed, 0, "signal")
    if cfg.model == "multi":
        return dm.generate_multi_index_signal(cfg.index_dim, cfg.n, r)
    return dm.generate_signal(cfg.n, r)


def rep_inputs(cfg, rep, signal):
    """(instance, W0) for one replication; W0 and xi are shared if fix_init."""
    src = 0 if cfg.fix_init else rep
    W0 = nw.init_gaussian(cfg.L, cfg.q, cfg.n, stream(cfg.seed, src, "init"))
    xi = cfg.sigma_xi * stream(cfg.seed, src, "noise").standard_normal(cfg.m)
    X = dm.generate_features(cfg.m, cfg.n, cfg.feature_dist, stream(cfg.seed, rep, "features"))
    if cfg.model == "multi":
        Y = np.tanh(np.linalg.norm(X @ signal.T, axis=1)) + xi
        inst = dm.SingleIndexInstance(X, signal[0].copy(), xi, Y, None,
                                      dm.FeatureDist.parse(cfg.feature_dist), signal)
    else:
        link = registry_get(cfg.link)
        inst = dm.SingleIndexInstance(X, signal, xi, link.value(X @ signal) + xi, link,
                                      dm.FeatureDist.parse(cfg.feature_dist))
    return inst, W0


def csv_header(L):
    return (["rep", "t", "e_test_hat", "e_test_mc", "e_test_mc_se", "e_train"]
            + [f"reldist_l{a}" for a in range(1, L + 1)])


def run_rep(cfg, rep, signal=None):
    signal = make_signal(cfg) if signal is None else signal
    inst, W0 = rep_inputs(cfg, rep, signal)
    acts = cfg.acts
    x_test = dm.generate_features(cfg.test_samples, cfg.n, cfg.feature_dist,
                                  stream(cfg.seed, rep, "test"))
    base = [np.linalg.norm(w) for w in W0.W]
    rows = []

    def hook(state, rec):
        mc, mc_se = ev.test_error_mc(state.W, acts, inst.mu_star, inst.link, inst.xi,
                                     inst.feature_dist, 0, None, target=inst.regression,
                                     x_new=x_test)
        rel = [np.linalg.norm(w - w0) / b if b > 0 else 0.0
               for w, w0, b in zip(state.W.W, W0.W, base)]
        rows.append([rep, rec["t"], rec["e_test_hat"], mc, mc_se, rec["e_train"]] + rel)

    with np.errstate(over="ignore", invalid="ignore"):
        try:
            ag.run(inst.X, inst.Y, W0, acts, cfg.eta_per_layer(), cfg.iters, hooks=(hook,))
        except ag.DivergenceError:
            # keep the schema: diverged iterations are recorded as NaN
            for t in range(len(rows), cfg.iters + 1):
                rows.append([rep, t] + [float("nan")] * (4 + cfg.L))
    return rows


def _workers():
    try:
        return max(1, int(os.environ.get("GDSE_THREADS", "1")))
    except ValueError:
        return 1


def _run_rep_star(args):
    return run_rep(*args)


def run_experiment(cfg, out_path=None):
    """All replications in rep order; writes the train CSV if out_path is given."""
    cfg.validate()
    signal = make_signal(cfg)
    jobs = [(cfg, rep, signal) for rep in range(cfg.reps)]
    workers = min(_workers(), cfg.reps)
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_run_rep_star, jobs))
    else:
        parts = [_run_rep_star(j) for j in jobs]
    rows = [r for p in parts for r in p]
    if out_path is not None:
        write_rows(out_path, csv_header(cfg.L), rows)
    return rows


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def summarize(rows, L):
    """Per-iteration mean and standard error over replications, keyed by column.

    Diverged replications (NaN rows) are left out; ``n_finite`` counts the rest.
    """
    A = np.asarray(rows, dtype=float)
    cols = csv_header(L)
    ts = np.unique(A[:, 1]).astype(int)
    out = {"t": ts}
    finite = np.all(np.isfinite(A[:, 2:]), axis=1)
    out["n_finite"] = np.array([np.sum(finite & (A[:, 1] == t)) for t in ts])
    for j, c in enumerate(cols[2:], start=2):
        mean, sd = [], []
        for t in ts:
            v = A[finite & (A[:, 1] == t), j]
            mean.append(v.mean() if len(v) else np.nan)
            sd.append(v.std(ddof=1) / np.sqrt(len(v)) if len(v) > 1 else 0.0)
        out[c] = np.array(mean)
        out[c + "_se"] = np.array(sd)
    return out


# train error this many times its starting value marks a run as diverged
DIVERGED_GROWTH = 1e6


def diverged_reps(rows):
    """Replications whose weights overflowed or whose train error blew up."""
    A = np.asarray(rows, dtype=float)
    bad = set(A[~np.all(np.isfinite(A[:, 2:]), axis=1), 0])
    start = {r: e for r, t, e in A[A[:, 1] == 0][:, [0, 1, 5]]}
    bad |= {r for r, e in A[:, [0, 5]] if e > DIVERGED_GROWTH * start[r]}
    return len(bad)


# ---- state evolution curves ----------------------------------------------

SE_HEADER = ["t", "train_pred", "train_pred_se", "test_pred", "test_pred_se"]


def run_se_curves(cfg, out_path=None, param_path=None):
    """SE predictions for the replication-0 initialization and noise."""
    cfg.validate()
    if cfg.model != "single":
        raise ConfigError("model: state evolution covers the single-index model only")
    signal = make_signal(cfg)
    inst, W0 = rep_inputs(cfg, 0, signal)
    st, _ = se.run_se(W0, signal, inst.xi, cfg.acts, inst.link, cfg.eta_per_layer(),
                      cfg.iters, N=cfg.mc_samples, seed=cfg.seed)
    rows = [[t, st.train_pred[t], st.train_se[t], st.test_pred[t], st.test_se[t]]
            for t in range(cfg.iters + 1)]
    if out_path is not None:
        write_rows(out_path, SE_HEADER, rows)
    if param_path is not None:
        se.write_csv(st, param_path)
    return rows, st


# ---- figures ------------------------------------------------------------

def _scaled(base, scale, **kw):
    m = max(4, int(round(base.m * scale)))
    n = max(2, int(round(base.n * scale)))
    reps = max(1, int(math.ceil(base.reps * scale)))
    return dataclasses.replace(base, m=m, n=n, reps=reps, **kw)


def figure_panels(fig_id, scale=0.5, seed=0):
    """{panel name: [(series label, config), ...]} for figures 1-5."""
    common = ExperimentConfig(seed=seed)
    panels = {}
    if fig_id in (1, 4):
        noisy = fig_id == 1
        base = common.replace(iters=70 if noisy else 60, reps=120 if noisy else 80,
                              sigma_xi=0.5 if noisy else 0.0)
        for L in (2, 3, 5):
            panels[f"fig{fig_id}_L{L}"] = [
                (d, _scaled(base, scale, L=L, feature_dist=d)) for d in ("gaussian", "t10")]
        if fig_id == 4:
            for phi in (0.5, 1.0, 2.0):
                c = _scaled(base.replace(model="multi"), scale)
                panels[f"fig4_multi_phi{phi:g}"] = [
                    ("gaussian", dataclasses.replace(c, n=max(2, int(round(c.m / phi)))))]
    elif fig_id == 2:
        base = common.replace(model="multi")
        for phi in (0.5, 1.0, 2.0):
            c = _scaled(base, scale)
            panels[f"fig2_phi{phi:g}"] = [
                ("gaussian", dataclasses.replace(c, n=max(2, int(round(c.m / phi)))))]
    elif fig_id == 3:
        base = common.replace(iters=50, reps=30)
        for ratio in (0.1, 0.2, 0.5):
            c = _scaled(base, scale)
            panels[f"fig3_qm{ratio:g}"] = [
                ("gaussian", dataclasses.replace(c, q=max(1, int(round(ratio * c.m)))))]
    elif fig_id == 5:
        base = common.replace(iters=50, sigma_xi=0.0)
        for act in ("relu", "smoothed_relu"):
            panels[f"fig5_{act}"] = [("gaussian", _scaled(base, scale, activation=act))]
    else:
        raise ConfigError(f"fig: unknown figure {fig_id}; choose from 1-5")
    for series in panels.values():
        for _, c in series:
            c.validate()
    return panels


def reproduce_figure(fig_id, scale=0.5, out_dir=".", seed=0, log=print):
    from .plotting import COLORS, panel_svg

    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name, series in figure_panels(fig_id, scale, seed).items():
        curves, rel = [], []
        for label, cfg in series:
            log(f"{name} [{label}]: m={cfg.m} n={cfg.n} q={cfg.q} L={cfg.L} reps={cfg.reps}")
            path = os.path.join(out_dir, f"{name}_{label}.csv")
            rows = run_experiment(cfg, path)
            written.append(path)
            s = summarize(rows, cfg.L)
            curves.append((label, COLORS.get(label, "tab:blue"), s["t"], s["e_test_hat"],
                           s["e_test_hat_se"], s["e_test_mc"], s["e_test_mc_se"]))
            if label == series[0][0]:
                rel = [(f"layer {a}", s["t"], s[f"reldist_l{a}"], s[f"reldist_l{a}_se"])
                       for a in range(1, cfg.L + 1)]
        svg = os.path.join(out_dir, f"{name}.svg")
        panel_svg(svg, name, curves, rel)
        written.append(svg)
    return written
