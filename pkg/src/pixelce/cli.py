"""Command-line front end.

Subcommands:

``sweep``     run a Monte-Carlo NMSE sweep and write records, aggregates and a manifest
``estimate``  run one estimator on externally supplied observation / pattern files
``synth``     export one synthetic instance (network, truth, patterns, observation)

Configs are flat ``key = value`` files; lists use ``[a, b, c]``, ``#`` starts
a comment and estimator settings take a ``gamp.`` prefix
(``gamp.damping = 0.5``).  Exit codes: 0 success, 2 config/input error,
3 runtime failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from importlib import resources

import numpy as np

from . import __version__, antenna, baselines, bench, channel, estimator, matio, sensing
from .errors import ConfigError, MatrixFormatError, PixelCEError, RankTooLarge

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
PRESETS = ("fig3a", "fig3b", "fig4")
GAMP_PREFIX = "gamp."
DEFAULT_OUT = "pixelce_out"


class CLIError(Exception):
    def __init__(self, message: str, code: int = EXIT_CONFIG):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------- config text

def _scalar(text: str):
    low = text.lower()
    if low in ("none", "null", ""):
        return None
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def parse_value(text: str):
    text = text.strip()
    if text.startswith("["):
        if not text.endswith("]"):
            raise ConfigError(f"unterminated list: {text!r}")
        body = text[1:-1].strip()
        return [] if not body else [_scalar(part.strip()) for part in body.split(",")]
    return _scalar(text)


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key] = parse_value(value)
    return out


def read_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise CLIError(f"cannot read config file {path}: {exc.strerror or exc}") from exc
    return parse_config_text(text, path)


def read_preset(name: str) -> dict:
    if name not in PRESETS:
        raise CLIError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("pixelce").joinpath("presets").joinpath(f"{name}.cfg").read_text(encoding="utf-8")
    return parse_config_text(text, f"preset {name}")


def parse_override(item: str) -> tuple[str, object]:
    if "=" not in item:
        raise CLIError(f"--set expects KEY=VALUE, got {item!r}")
    key, value = item.split("=", 1)
    return key.strip(), parse_value(value)


_SWEEP_FIELDS = {f.name: f for f in dataclasses.fields(bench.SweepConfig) if f.name != "gamp"}
_GAMP_FIELDS = {f.name: f for f in dataclasses.fields(estimator.EstimatorConfig)}


def _coerce(key: str, value, default):
    """Convert a parsed value to the type of the field's default."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    return value


def _as_list(key: str, value):
    return list(value) if isinstance(value, list) else [value]


def build_sweep_config(raw: dict) -> bench.SweepConfig:
    """Typed SweepConfig from parsed key/value pairs; unknown keys are errors."""
    sweep_kw, gamp_kw = {}, {}
    defaults = bench.SweepConfig()
    gamp_defaults = estimator.EstimatorConfig()
    for key, value in raw.items():
        if key.startswith(GAMP_PREFIX):
            name = key[len(GAMP_PREFIX):]
            if name not in _GAMP_FIELDS:
                raise ConfigError(f"unknown estimator setting {key!r}")
            gamp_kw[name] = _coerce(key, value, getattr(gamp_defaults, name))
            continue
        if key not in _SWEEP_FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        if key in ("t_values", "snr_db_values", "estimators"):
            items = _as_list(key, value)
            if key == "t_values":
                items = [_coerce(key, v, 0) for v in items]
            elif key == "snr_db_values":
                items = [_snr(key, v) for v in items]
            else:
                items = [str(v) for v in items]
            sweep_kw[key] = tuple(items)
        elif key == "r_values":
            if value is None or value == "auto":
                sweep_kw[key] = None
            else:
                sweep_kw[key] = tuple(v if v == "auto" else _coerce(key, v, 0) for v in _as_list(key, value))
        elif key in ("network_z", "network_eoc"):
            sweep_kw[key] = None if value is None else str(value)
        elif key == "pool_size":
            sweep_kw[key] = None if value is None else _coerce(key, value, 0)
        else:
            sweep_kw[key] = _coerce(key, value, getattr(defaults, key))
    try:
        return bench.SweepConfig(gamp=estimator.EstimatorConfig(**gamp_kw), **sweep_kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _snr(key, value) -> float:
    if isinstance(value, str) and value.lower() in ("inf", "+inf", "infinity"):
        return float("inf")
    return _coerce(key, value, 0.0)


def _format_value(value) -> str:
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_format_value(v) for v in value) + "]"
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_config(cfg: bench.SweepConfig) -> str:
    """Every resolved parameter in the config syntax (re-readable)."""
    lines = []
    for name in _SWEEP_FIELDS:
        value = getattr(cfg, name)
        if name == "r_values" and value is None:
            value = "auto"
        lines.append(f"{name} = {_format_value(value)}")
    for name in _GAMP_FIELDS:
        lines.append(f"{GAMP_PREFIX}{name} = {_format_value(getattr(cfg.gamp, name))}")
    return "\n".join(lines) + "\n"


def resolve_out(arg: str | None) -> str:
    return arg or os.environ.get("PIXELCE_OUT") or DEFAULT_OUT


def _ensure_dir(path: str) -> None:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise CLIError(f"cannot create output directory {path}: {exc.strerror or exc}") from exc
    if not os.access(path, os.W_OK):
        raise CLIError(f"output directory {path} is not writable")


def resolve_sweep(args) -> bench.SweepConfig:
    raw = {}
    if args.preset:
        raw.update(read_preset(args.preset))
    if args.config:
        raw.update(read_config_file(args.config))
    for item in args.set or []:
        key, value = parse_override(item)
        raw[key] = value
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.estimator:
        raw["estimators"] = list(args.estimator)
    if args.timing:
        raw["timing"] = True
    for key in ("network_z", "network_eoc"):
        path = raw.get(key)
        if path is not None and not os.path.isfile(str(path)):
            raise CLIError(f"{key}: file not found: {path}")
    return build_sweep_config(raw)


# ---------------------------------------------------------------- commands

def cmd_sweep(args) -> int:
    cfg = resolve_sweep(args)
    out = resolve_out(args.out)
    _ensure_dir(out)
    if args.threads < 1:
        raise CLIError("--threads must be >= 1")
    manifest = [
        f"# pixelce {__version__} sweep manifest",
        f"# config = {args.config or 'none'}",
        f"# preset = {args.preset or 'none'}",
        f"# out = {out}",
        f"# threads = {args.threads}",
        format_config(cfg),
    ]
    with open(os.path.join(out, "manifest.cfg"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(manifest))
    log = (lambda msg: print(msg, file=sys.stderr)) if not args.quiet else None
    result = bench.run_sweep(cfg, threads=args.threads, log=log)
    rec_path, agg_path = result.write(out)
    if not args.quiet:
        print(f"wrote {rec_path} and {agg_path} ({result.failed} failed records)", file=sys.stderr)
    return EXIT_OK


def _load(path: str, shape=None) -> np.ndarray:
    if not os.path.isfile(path):
        raise CLIError(f"file not found: {path}")
    return matio.load_matrix(path, shape)


def cmd_estimate(args) -> int:
    patterns = _load(args.patterns)
    two_k, t = patterns.shape
    if two_k % 2:
        raise MatrixFormatError(f"{args.patterns}: pattern matrix needs an even row count (2K), got {two_k}")
    y_r = _load(args.observation)
    if y_r.shape[1] != t:
        raise MatrixFormatError(f"{args.observation}: observation has {y_r.shape[1]} columns, "
                                f"patterns in {args.patterns} have T={t}")
    if args.sigma2 < 0:
        raise CLIError("--sigma2 must be non-negative")
    raw = {}
    for item in args.set or []:
        key, value = parse_override(item)
        if not key.startswith(GAMP_PREFIX):
            raise CLIError(f"estimate accepts only {GAMP_PREFIX}* settings, got {key!r}")
        raw[key] = value
    gamp_cfg = build_sweep_config(raw).gamp
    rank = args.rank if args.rank == "auto" else _int_arg("--rank", args.rank)
    op = sensing.operator_from_patterns(patterns, args.power, rank)
    obs = channel.PilotObservation(y_r, args.power, args.sigma2)
    y_tilde = sensing.project_observation(obs, op)
    sigma2 = max(args.sigma2, bench.NOISELESS_SIGMA2)

    diag_text = None
    if args.estimator == "gamp":
        est, diag = estimator.run_mmp_gamp(y_tilde, op, sigma2, gamp_cfg)
        diag_text = diag.to_csv()
    elif args.estimator == "ls":
        est = baselines.ls_estimate(y_tilde, op)
    elif args.estimator == "lmmse":
        est = baselines.lmmse_estimate(y_tilde, op, sigma2)
    elif args.estimator == "omp":
        est = baselines.omp_estimate(y_tilde, op, sigma2)
    else:
        if not args.truth:
            raise CLIError("--estimator genie needs --truth")
        truth = channel.load_channel(args.truth, args.support, n=y_r.shape[0], k=two_k // 2)
        est = baselines.genie_lmmse(y_tilde, op, sigma2, truth, gamp_cfg.var_floor)
    if diag_text is None:
        diag_text = _plain_diagnostics(y_tilde, op.e_eff, est.h_v)

    out = resolve_out(args.out)
    _ensure_dir(out)
    channel.save_channel(os.path.join(out, "h_v.txt"), est)
    with open(os.path.join(out, "diagnostics.csv"), "w", encoding="ascii", newline="") as fh:
        fh.write(diag_text)
    if args.truth and not args.quiet:
        truth = channel.load_channel(args.truth, n=y_r.shape[0], k=two_k // 2)
        print(f"nmse = {bench.nmse(truth, est)!r}", file=sys.stderr)
    return EXIT_OK


def _plain_diagnostics(y_tilde, e_eff, h) -> str:
    lines = ["row,residual,support_size"]
    for n in range(h.shape[0]):
        res = float(np.linalg.norm(y_tilde[n] - e_eff @ h[n]))
        lines.append(f"{n},{res!r},{int(np.count_nonzero(h[n]))}")
    return "\n".join(lines) + "\n"


def _int_arg(flag: str, value: str) -> int:
    try:
        return int(value)
    except ValueError as exc:
        raise CLIError(f"{flag} expects an integer or 'auto', got {value!r}") from exc


def cmd_synth(args) -> int:
    """Write the network, truth, patterns and noisy observation of one trial."""
    cfg = resolve_sweep(args)
    out = resolve_out(args.out)
    _ensure_dir(out)
    t = args.t if args.t is not None else cfg.t_values[0]
    r = args.r if args.r is not None else (cfg.pairs()[0][1] if args.t is None else "auto")
    snr = args.snr if args.snr is not None else cfg.snr_db_values[0]
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, args.trial]))
    net = bench.build_network(cfg)
    truth = channel.synth_channel(cfg.n, cfg.k, cfg.paths, rng, cfg.los_boost_db)
    coders = sensing.select_coders(net, t, cfg.pool_size, rng)
    op = sensing.build_operator(net, coders, cfg.power, r)
    sigma2 = channel.snr_db_to_sigma2(snr, cfg.power, cfg.n, cfg.k)
    obs = channel.observe(truth, channel.dft_bs_array(cfg.n), op.patterns, cfg.power, sigma2, rng)

    antenna.save_network(os.path.join(out, "network"), net)
    channel.save_channel(os.path.join(out, "truth.txt"), truth, os.path.join(out, "truth_support.txt"))
    matio.save_coders(os.path.join(out, "coders.txt"), [c.bits for c in coders])
    matio.save_matrix(os.path.join(out, "patterns.txt"), op.patterns)
    matio.save_matrix(os.path.join(out, "observation.txt"), obs.y_r)
    with open(os.path.join(out, "instance.cfg"), "w", encoding="utf-8") as fh:
        fh.write(f"# pixelce {__version__} synthetic instance\n"
                 f"T = {t}\nr = {op.rank_r}\nsnr_db = {snr!r}\nsigma2 = {sigma2!r}\n"
                 f"power = {cfg.power!r}\ntrial = {args.trial}\n" + format_config(cfg))
    if not args.quiet:
        print(f"wrote instance to {out} (sigma2 = {sigma2!r}, r = {op.rank_r})", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_sweep_options(p) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--preset", help=f"bundled config ({', '.join(PRESETS)})")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--estimator", action="append", choices=bench.ESTIMATORS,
                   help="restrict to these estimators (repeatable)")
    p.add_argument("--timing", action="store_true", help="record per-estimator runtime_ms")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pixelce", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"pixelce {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="Monte-Carlo NMSE sweep")
    _add_sweep_options(p)
    p.add_argument("--out", help="output directory (default: $PIXELCE_OUT or ./pixelce_out)")
    p.add_argument("--threads", type=int, default=1, help="worker threads")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("estimate", help="estimate H_v from observation and pattern files")
    p.add_argument("--observation", required=True, help="N x T beamspace observation matrix")
    p.add_argument("--patterns", required=True, help="2K x T pattern matrix E(B)")
    p.add_argument("--sigma2", type=float, required=True, help="noise variance")
    p.add_argument("--power", type=float, default=1.0)
    p.add_argument("--rank", default="auto", help="truncation rank r or 'auto'")
    p.add_argument("--estimator", default="gamp", choices=bench.ESTIMATORS)
    p.add_argument("--truth", help="true H_v (required for genie; reports NMSE)")
    p.add_argument("--support", help="support file for --truth")
    p.add_argument("--set", action="append", metavar="gamp.KEY=VALUE",
                   help="estimator setting override (repeatable)")
    p.add_argument("--out", help="output directory (default: $PIXELCE_OUT or ./pixelce_out)")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("synth", help="export one synthetic instance")
    _add_sweep_options(p)
    p.add_argument("--t", type=int, help="pilot count (default: first t_values entry)")
    p.add_argument("--r", type=int, help="truncation rank (default: paired r or auto)")
    p.add_argument("--snr", type=float, help="SNR in dB (default: first snr_db_values entry)")
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--out", help="output directory (default: $PIXELCE_OUT or ./pixelce_out)")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"pixelce: error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, MatrixFormatError, RankTooLarge, ValueError) as exc:
        print(f"pixelce: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PixelCEError, np.linalg.LinAlgError, OSError) as exc:
        print(f"pixelce: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
