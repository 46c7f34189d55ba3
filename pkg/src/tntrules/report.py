"""End-to-end runs and their artifacts: rule plots, run manifests, the full pipeline."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .bayes_opt import BOTrace, run_bo
from .evaluation import estimator_from_config, fidelity, reports_to_csv, union_volume_fraction
from .problems import ProblemConfig, get_problem
from .rules import HIGH, MODERATE
from .sensitivity import sensitivity, sensitivity_csv
from .tuning import TuningContext, nsga2_tune, scalar_tune

__all__ = ["render_svg", "RunManifest", "PipelineError", "run_pipeline", "MODES", "ARTIFACTS"]

MODES = ("fixed", "scalar-tune", "pareto-tune")
ARTIFACTS = ("trace.json", "dataset.csv", "linkage.csv", "rules.json", "rules.txt",
             "sensitivity.csv", "report.csv", "plot.svg", "manifest.json")

_SIZE = 480
_MARGIN = 40
# Eight-stop ramp from dark blue (low mu) to light yellow (high mu).
_RAMP = ("#30123b", "#4145ab", "#4675ed", "#39a2fc", "#1bcfd4", "#61fc6c", "#c5f234", "#fdea9c")


def _ramp(t: float) -> str:
    return _RAMP[int(np.clip(t, 0, 1) * (len(_RAMP) - 1) + 0.5)]


def _box_color(alpha: float):
    if alpha >= HIGH:
        return "red"
    if alpha >= MODERATE:
        return "yellow"
    return None


def render_svg(ruleset, dataset, known_minima=(), incumbent=None, dims=(0, 1), size: int = _SIZE) -> str:
    """Scatter of the explanation samples with rule boxes on top.

    Boxes with α >= 0.6 are red, 0.4 <= α < 0.6 yellow, lower ones are not
    drawn. Spaces with more than two dimensions are projected on ``dims``;
    a single dimension is drawn against the constant 0.5 line.
    """
    space = dataset.space
    i = dims[0]
    j = dims[1] if space.dims > 1 else None
    inner = size - 2 * _MARGIN
    lo, hi = space.lower, space.upper

    def px(v, k):
        return _MARGIN + (v - lo[k]) / (hi[k] - lo[k]) * inner

    def py(v, k):
        if k is None:
            return _MARGIN + 0.5 * inner
        return _MARGIN + (hi[k] - v) / (hi[k] - lo[k]) * inner

    names = list(space.names)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect class="frame" x="{_MARGIN}" y="{_MARGIN}" width="{inner}" height="{inner}" fill="white" stroke="black"/>',
        f'<text x="{size / 2:.1f}" y="{size - 8}" text-anchor="middle" font-size="12">{escape(names[i])}</text>',
    ]
    if j is not None:
        out.append(f'<text x="12" y="{size / 2:.1f}" font-size="12" transform="rotate(-90 12 {size / 2:.1f})" '
                   f'text-anchor="middle">{escape(names[j])}</text>')
    tone = dataset.mean_normalized
    for x, t in zip(dataset.X, tone):
        yv = x[j] if j is not None else 0.0
        out.append(f'<circle class="sample" cx="{px(x[i], i):.2f}" cy="{py(yv, j):.2f}" r="2" fill="{_ramp(t)}"/>')
    for r in ruleset:
        color = _box_color(r.alpha)
        if color is None:
            continue
        x0, x1 = px(r.lower[i], i), px(r.upper[i], i)
        if j is None:
            y0, y1 = _MARGIN, _MARGIN + inner
        else:
            y0, y1 = py(r.upper[j], j), py(r.lower[j], j)
        out.append(f'<rect class="rule" x="{x0:.2f}" y="{y0:.2f}" width="{x1 - x0:.2f}" height="{y1 - y0:.2f}" '
                   f'fill="{color}" fill-opacity="0.15" stroke="{color}" stroke-width="2">'
                   f'<title>{escape(r.to_text(names))}</title></rect>')
    for loc, *_ in known_minima:
        loc = np.asarray(loc, dtype=float)
        yv = loc[j] if j is not None else 0.0
        cx, cy = px(loc[i], i), py(yv, j)
        out.append(f'<path class="minimum" d="M{cx - 5:.2f} {cy - 5:.2f}L{cx + 5:.2f} {cy + 5:.2f}'
                   f'M{cx - 5:.2f} {cy + 5:.2f}L{cx + 5:.2f} {cy - 5:.2f}" stroke="black" stroke-width="2"/>')
    if incumbent is not None:
        inc = np.asarray(incumbent, dtype=float)
        yv = inc[j] if j is not None else 0.0
        out.append(f'<circle class="incumbent" cx="{px(inc[i], i):.2f}" cy="{py(yv, j):.2f}" r="6" '
                   f'fill="none" stroke="magenta" stroke-width="2"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


class PipelineError(RuntimeError):
    """A pipeline stage failed; ``manifest`` records what completed."""

    def __init__(self, stage: str, cause: Exception, manifest: "RunManifest"):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.manifest = manifest


@dataclass
class RunManifest:
    config: dict
    seeds: dict
    mode: str = "fixed"
    files: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)
    error: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))


def _write(path: Path, text: str, manifest: RunManifest):
    path.write_text(text)
    manifest.files[path.name] = str(path)


def run_pipeline(config: ProblemConfig, out_dir, mode: str = "fixed", trace: BOTrace | None = None,
                 generations: int = 25, population: int = 20) -> RunManifest:
    """Optimize, explain, rank, analyze and write every artifact to ``out_dir``.

    ``mode`` picks ``t_s``: as configured, by grid scan, or by NSGA-II.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    obj = get_problem(config.problem)
    manifest = RunManifest(config.to_dict(), {"bo": config.seed, "explain": config.seed}, mode)
    stage = "optimize"
    state = {}

    def timed(name, fn):
        nonlocal stage
        stage = name
        t0 = time.perf_counter()
        result = fn()
        manifest.timings[name] = round(time.perf_counter() - t0, 4)
        return result

    try:
        if trace is None:
            trace = timed("optimize", lambda: run_bo(obj, config.bo_iterations, seed=config.seed))
        _write(out / "trace.json", trace.to_json(), manifest)
        est = estimator_from_config(config, obj, surrogate=trace.model)
        timed("explain", lambda: est.fit(trace.X, trace.y))
        if mode != "fixed":
            ctx = TuningContext.from_estimator(est)
            if mode == "scalar-tune":
                t_s, _ = timed("tune", lambda: scalar_tune(ctx))
            else:
                front, chosen = timed("tune", lambda: nsga2_tune(ctx, generations, population, config.seed))
                t_s = chosen.t_s
                state["front"] = front.to_rows()
            manifest.stats["chosen_t_s"] = t_s
            est.set_params(t_s=t_s)
            timed("explain", lambda: est.fit_dataset(est.dataset_, est.f_best_, trace.model))
        est.dataset_.to_csv(out / "dataset.csv")
        manifest.files["dataset.csv"] = str(out / "dataset.csv")
        est.tree_.to_csv(out / "linkage.csv")
        manifest.files["linkage.csv"] = str(out / "linkage.csv")
        rules = est.rules_
        reports = timed("sensitivity", lambda: [sensitivity(r, trace.model, est.dataset_) for r in rules])
        rules_doc = rules.to_dict()
        for doc, rep in zip(rules_doc["rules"], reports):
            doc["sensitivity"] = rep.to_dict()
        _write(out / "rules.json", json.dumps(rules_doc, indent=2, sort_keys=True), manifest)
        lines = [rules.to_text()] if len(rules) else ["(no rules above the interestingness threshold)"]
        lines += [f"rule {k + 1}: {rep.to_text()}" for k, rep in enumerate(reports)]
        _write(out / "rules.txt", "\n".join(lines) + "\n", manifest)
        _write(out / "sensitivity.csv", sensitivity_csv(reports), manifest)

        stage = "report"
        vol_sum = float(sum(r.volume for r in rules)) / obj.space.volume
        union, union_se = union_volume_fraction(rules, obj.space, seed=config.seed)
        fid = fidelity(rules, trace.model, config.fidelity_samples, config.seed)[0] if len(rules) else float("nan")
        manifest.stats.update({"n_rules_all": len(est.rules_all_), "n_rules": len(rules),
                               "fidelity": fid, "volume_sum_fraction": vol_sum,
                               "volume_union_fraction": union, "volume_union_se": union_se,
                               "f_opt": trace.f_opt, "x_opt": trace.x_opt.tolist()})
        row = {"problem": obj.name, "seed": config.seed, "mode": mode, "t_s": est.t_s} | {
            k: v for k, v in manifest.stats.items() if k != "x_opt"}
        _write(out / "report.csv", reports_to_csv([row]), manifest)
        if "front" in state:
            _write(out / "ts_front.csv", reports_to_csv(state["front"]), manifest)
        svg = render_svg(rules, est.dataset_, obj.known_minima, trace.x_opt)
        _write(out / "plot.svg", svg, manifest)
    except Exception as exc:
        manifest.error = f"{stage}: {type(exc).__name__}: {exc}"
        (out / "manifest.json").write_text(manifest.to_json())
        raise PipelineError(stage, exc, manifest) from exc
    manifest.files["manifest.json"] = str(out / "manifest.json")
    (out / "manifest.json").write_text(manifest.to_json())
    return manifest
