"""Command-line front end.

Three subcommands:

* ``classify <kernel-file>`` prints the connectivity class and, when the
  class calls for them, the marker witnesses for each signaling sensor;
* ``exponent <problem-file> (--channel <kernel-file> | --gg p,sigma,h1,h2)``
  prints the achievable type-2 exponent and its minimizing source joint;
* ``simulate <config-file>`` runs a blocklength ladder and writes a CSV.

Problem files: a dims line ``|U1| |U2| |V|``, the P tensor row-major, a
blank line, then the Q tensor. ``#`` lines are comments. Config files are
flat ``key = value`` lines; paths are resolved relative to the config file.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .channels import (
    BudgetLaw,
    ChannelClass,
    CostModel,
    Dmmac,
    GgMac,
    classify,
    find_markers,
    load_dmmac,
)
from .errors import NoMarkers, ParseError, SteinmacError
from .exponents import min_kl_fixed_marginals
from .prob import Joint3Pmf, marginal
from .schemes import class_exponent
from .simulate import SimConfig, TestProblem, run_ladder

_SCHEME_CHOICES = ("auto", "local", "sparse", "sparse_full", "full_sparse")


def load_problem(path) -> TestProblem:
    """Parse a problem file into a TestProblem; errors carry line numbers."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ParseError(f"cannot read problem file: {e}", path=str(path))

    dims = None
    tensors: list[list[float]] = [[]]
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("#"):
            continue
        if not line:
            if dims is not None and tensors[-1]:
                tensors.append([])
            continue
        parts = line.split()
        try:
            values = [float(tok) for tok in parts]
        except ValueError:
            raise ParseError(
                f"expected numbers, got {line!r}", path=str(path), line=lineno
            )
        if dims is None:
            if len(parts) != 3:
                raise ParseError(
                    "dims line must hold three alphabet sizes",
                    path=str(path),
                    line=lineno,
                )
            dims = tuple(int(v) for v in values)
            if any(d != v for d, v in zip(dims, values)) or any(d < 1 for d in dims):
                raise ParseError(
                    "alphabet sizes must be positive integers",
                    path=str(path),
                    line=lineno,
                )
            continue
        tensors[-1].extend(values)

    if dims is None:
        raise ParseError("empty problem file", path=str(path))
    tensors = [t for t in tensors if t]
    if len(tensors) != 2:
        raise ParseError(
            f"expected P and Q tensors separated by a blank line, found "
            f"{len(tensors)} block(s)",
            path=str(path),
        )
    size = dims[0] * dims[1] * dims[2]
    grids = []
    for name, flat in zip("PQ", tensors):
        if len(flat) != size:
            raise ParseError(
                f"tensor {name} has {len(flat)} entries, needs {size}",
                path=str(path),
            )
        arr = np.array(flat, dtype=float).reshape(dims)
        if (arr < 0).any():
            raise ParseError(
                f"tensor {name} has negative entries", path=str(path)
            )
        total = arr.sum()
        if abs(total - 1.0) > 1e-9:
            raise ParseError(
                f"tensor {name} sums to {total!r}, not 1", path=str(path)
            )
        grids.append(arr / total)
    return TestProblem(Joint3Pmf(grids[0]), Joint3Pmf(grids[1]))


_CONFIG_KEYS = {
    "problem",
    "channel.kind",
    "channel.file",
    "gg.p",
    "gg.sigma",
    "gg.h1",
    "gg.h2",
    "cost.a",
    "cost.b",
    "cost.law",
    "sim.trials",
    "sim.seed",
    "sim.mu",
    "sim.ladder",
    "scheme",
    "estimator",
    "out",
}


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ParseError(f"cannot read config file: {e}", path=str(path))
    cfg: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(
                f"expected key = value, got {line!r}", path=str(path), line=lineno
            )
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _CONFIG_KEYS:
            raise ParseError(f"unknown key {key!r}", path=str(path), line=lineno)
        if key in cfg:
            raise ParseError(f"duplicate key {key!r}", path=str(path), line=lineno)
        if not value:
            raise ParseError(f"empty value for {key!r}", path=str(path), line=lineno)
        cfg[key] = value
    return cfg


def _require(cfg: dict, key: str, path: str) -> str:
    if key not in cfg:
        raise ParseError(f"missing required key {key!r}", path=path)
    return cfg[key]


def _as_float(cfg: dict, key: str, path: str) -> float:
    value = _require(cfg, key, path)
    try:
        return float(value)
    except ValueError:
        raise ParseError(f"{key} must be a number, got {value!r}", path=path)


def _as_int(cfg: dict, key: str, path: str) -> int:
    value = _require(cfg, key, path)
    try:
        return int(value)
    except ValueError:
        raise ParseError(f"{key} must be an integer, got {value!r}", path=path)


def _parse_gg_mac(text: str) -> GgMac:
    parts = [tok.strip() for tok in text.split(",")]
    if len(parts) != 4:
        raise ParseError("--gg expects p,sigma,h1,h2")
    try:
        p, sigma, h1, h2 = (float(tok) for tok in parts)
    except ValueError:
        raise ParseError(f"--gg expects four numbers, got {text!r}")
    return GgMac(p, sigma, h1, h2)


def _pinned_axes(cls: ChannelClass) -> tuple:
    return {
        ChannelClass.FULL: (2,),
        ChannelClass.SPARSE: (0, 1, 2),
        ChannelClass.SPARSE_FULL: (0, 2),
        ChannelClass.FULL_SPARSE: (1, 2),
    }[cls]


def cmd_classify(args) -> int:
    ch = load_dmmac(args.kernel)
    cls = classify(ch)
    print(f"class: {cls.label}")
    try:
        markers = find_markers(ch, cls)
    except NoMarkers:
        print("markers: none (every output stays reachable)")
        return 0
    for sensor, w in ((1, markers.sensor1), (2, markers.sensor2)):
        if w is None:
            continue
        print(
            f"sensor {sensor} marker: off_input={w.off_input} "
            f"on_input={w.on_input} partner_pilot={w.partner_pilot} "
            f"marker_output={w.marker_output} "
            f"p_marker={w.marker_prob(ch, sensor):.6g}"
        )
    return 0


def cmd_exponent(args) -> int:
    problem = load_problem(args.problem)
    if args.channel is not None:
        ch = load_dmmac(args.channel)
        cls = classify(ch)
        print(f"class: {cls.label}")
    else:
        _parse_gg_mac(args.gg)  # validated; a noisy additive channel never
        cls = ChannelClass.FULL  # loses an output, so only v is observable
    theta = class_exponent(cls, problem.p, problem.q)
    cons = {
        axis: marginal(problem.p, axis) for axis in _pinned_axes(cls)
    }
    res = min_kl_fixed_marginals(problem.q.probs, cons)
    print(f"exponent: {theta:.6f}")
    print(f"exponent_nats: {theta!r}")
    print("minimizer (u1 u2 v probability):")
    arg = res.argmin
    for a in range(arg.shape[0]):
        for b in range(arg.shape[1]):
            for c in range(arg.shape[2]):
                print(f"{a} {b} {c} {arg[a, b, c]:.12g}")
    return 0


def _resolve_scheme(requested: str, channel, path: str) -> ChannelClass:
    if isinstance(channel, GgMac):
        if requested in ("auto", "local"):
            return ChannelClass.FULL
        raise ParseError(
            f"scheme {requested!r} needs channel markers and an additive noise "
            "channel has none; scheme=auto selects local",
            path=path,
        )
    cls = classify(channel)
    by_label = {c.label: c for c in ChannelClass}
    if requested == "auto":
        return cls
    if requested == "local":
        return ChannelClass.FULL
    wanted = by_label[requested]
    if wanted is not cls:
        suggestion = "local" if cls is ChannelClass.FULL else cls.label
        raise ParseError(
            f"channel classifies as {cls.label}; the {requested} scheme is "
            f"unavailable (scheme=auto selects {suggestion})",
            path=path,
        )
    return wanted


def cmd_simulate(args) -> int:
    cfg_path = Path(args.config)
    cfg = load_config(cfg_path)
    base = cfg_path.parent
    spath = str(cfg_path)

    problem = load_problem(base / _require(cfg, "problem", spath))

    kind = _require(cfg, "channel.kind", spath)
    if kind == "dmmac":
        channel = load_dmmac(base / _require(cfg, "channel.file", spath))
    elif kind == "gg":
        channel = GgMac(
            _as_float(cfg, "gg.p", spath),
            _as_float(cfg, "gg.sigma", spath),
            _as_float(cfg, "gg.h1", spath),
            _as_float(cfg, "gg.h2", spath),
        )
    else:
        raise ParseError(
            f"channel.kind must be dmmac or gg, got {kind!r}", path=spath
        )

    requested = cfg.get("scheme", "auto")
    if requested not in _SCHEME_CHOICES:
        raise ParseError(
            f"scheme must be one of {_SCHEME_CHOICES}, got {requested!r}",
            path=spath,
        )
    cls = _resolve_scheme(requested, channel, spath)

    cost_model = None
    if cls is not ChannelClass.FULL:
        law_name = cfg.get("cost.law", "power")
        if law_name == "power":
            law = BudgetLaw.power(
                _as_float(cfg, "cost.a", spath), _as_float(cfg, "cost.b", spath)
            )
        elif law_name == "log":
            law = BudgetLaw.log(_as_float(cfg, "cost.a", spath))
        else:
            raise ParseError(
                f"cost.law must be power or log, got {law_name!r}", path=spath
            )
        n1, n2, _ = channel.dims
        cost_model = CostModel.unit(n1, n2, law)

    ladder_raw = _require(cfg, "sim.ladder", spath)
    try:
        ladder = tuple(int(tok) for tok in ladder_raw.split(","))
    except ValueError:
        raise ParseError(
            f"sim.ladder must be comma-separated integers, got {ladder_raw!r}",
            path=spath,
        )

    sim = SimConfig(
        n_ladder=ladder,
        trials=_as_int(cfg, "sim.trials", spath),
        master_seed=_as_int(cfg, "sim.seed", spath),
        mu=_as_float(cfg, "sim.mu", spath),
        cost_model=cost_model,
        estimator=cfg.get("estimator", "direct"),
        workers=args.workers,
    )
    report = run_ladder(problem, channel, cls, sim)

    out = base / _require(cfg, "out", spath)
    out.write_text(report.to_csv())
    fitted = report.fitted_exponent
    fitted_str = f"{fitted:.6f}" if fitted is not None else "nan"
    print(f"wrote {out}")
    print(
        f"fitted_exponent: {fitted_str}  "
        f"theoretical_exponent: {report.theoretical_exponent:.6f}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="steinmac",
        description="Stein exponents and sublinear-cost testing schemes "
        "over multiple-access channels",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_cls = sub.add_parser("classify", help="classify a channel kernel file")
    p_cls.add_argument("kernel", help="kernel file path")
    p_cls.set_defaults(func=cmd_classify)

    p_exp = sub.add_parser("exponent", help="achievable type-2 exponent")
    p_exp.add_argument("problem", help="problem file path")
    group = p_exp.add_mutually_exclusive_group(required=True)
    group.add_argument("--channel", help="kernel file path")
    group.add_argument("--gg", help="additive-noise channel as p,sigma,h1,h2")
    p_exp.set_defaults(func=cmd_exponent)

    p_sim = sub.add_parser("simulate", help="run a blocklength ladder")
    p_sim.add_argument("config", help="config file path")
    p_sim.add_argument(
        "--workers", type=int, default=1,
        help="worker threads; the output is identical for any count",
    )
    p_sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SteinmacError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
