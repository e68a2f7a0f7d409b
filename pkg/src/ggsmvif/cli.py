"""Command-line front end.

Subcommands::

    ggsmvif score REF DIST      VIF bounds and approximation for an image pair
    ggsmvif bounds              per-block MI bounds for one channel setting
    ggsmvif simulate            bounds vs nested Monte Carlo on synthetic blocks
    ggsmvif fit-mggd DATA.csv   moment-matched MGGD fit of a sample matrix
    ggsmvif verify              closed form vs Monte Carlo sweep

Exit codes: 0 success, 1 internal error or failed verification, 2 bad input.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import warnings
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .errors import GGSMError
from .infotheory import ChannelParams, QualityReport, mi_approx_moment_matched, mi_distorted_bounds, mi_reference_bounds
from .kurtosis import fit_mggd_by_moments, moment_summary
from .mggd import KurtosisClampWarning, MggdParams, entropy, fisher_information
from .oracle import mc_mutual_information
from .pipeline import ScoreOptions, ScoreResult, load_image, score_images
from . import verification

logger = logging.getLogger("ggsmvif")

SCHEMA_VERSION = 1
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_BAD_INPUT = 2


class UsageError(Exception):
    """Bad command-line or config-file input (exit code 2)."""


@dataclass(frozen=True)
class Config:
    levels: int = 4
    block_side: int = 3
    alpha: float = 1.0
    estimate_alpha: bool = False
    sigma_n_mode: str = "rel"
    sigma_n_value: float = 0.1
    window: int = 16
    seed: int = 0
    format: str = "json"

    def __post_init__(self):
        for name in ("levels", "block_side", "window"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be a positive integer")
        if not self.alpha > 0:
            raise UsageError("alpha must be positive")
        if self.sigma_n_mode not in ("rel", "abs") or not self.sigma_n_value > 0:
            raise UsageError("sigma_n must be rel[:factor] or abs:value with a positive value")
        if self.seed < 0:
            raise UsageError("seed must be non-negative")
        if self.format not in ("json", "csv"):
            raise UsageError(f"unknown output format {self.format!r}")

    def score_options(self) -> ScoreOptions:
        return ScoreOptions(
            levels=self.levels,
            block_side=self.block_side,
            alpha=self.alpha,
            estimate_alpha=self.estimate_alpha,
            sigma_n_mode=self.sigma_n_mode,
            sigma_n_value=self.sigma_n_value,
            window=self.window,
        )


def parse_sigma_n(text: str) -> tuple[str, float]:
    """``rel``, ``rel:0.2``, ``abs:1e-4`` or a bare number (relative factor)."""
    text = text.strip()
    mode, _, value = text.partition(":")
    try:
        if mode == "rel":
            return "rel", float(value) if value else 0.1
        if mode == "abs":
            return "abs", float(value)
        return "rel", float(text)
    except ValueError:
        raise UsageError(f"cannot parse sigma_n {text!r}; expected rel[:factor] or abs:value") from None


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"cannot parse boolean {text!r}")


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment. Keys use underscores or dashes."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    raw = {}
    for number, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{number}: expected key=value")
        raw[key.strip().replace("-", "_")] = value.strip()
    return _coerce(raw, str(path))


def _coerce(raw: dict, origin: str) -> dict:
    out = {}
    try:
        for key, value in raw.items():
            if key in ("levels", "block_side", "window", "seed"):
                out[key] = int(value)
            elif key == "alpha":
                if value == "estimate":
                    out["estimate_alpha"] = True
                else:
                    out["alpha"] = float(value)
            elif key == "estimate_alpha":
                out["estimate_alpha"] = _parse_bool(value)
            elif key == "sigma_n":
                out["sigma_n_mode"], out["sigma_n_value"] = parse_sigma_n(value)
            elif key == "format":
                out["format"] = value
            else:
                raise UsageError(f"{origin}: unknown config key {key!r}")
    except ValueError as exc:
        raise UsageError(f"{origin}: {exc}") from None
    return out


def build_config(args: argparse.Namespace) -> Config:
    """Defaults, then the config file, then explicit flags."""
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for f in fields(Config):
        flag = getattr(args, f.name, None)
        if flag is not None and f.name not in ("sigma_n_mode", "sigma_n_value"):
            values[f.name] = flag
    if getattr(args, "sigma_n", None) is not None:
        values["sigma_n_mode"], values["sigma_n_value"] = parse_sigma_n(args.sigma_n)
    if getattr(args, "alpha", None) is not None:
        values["estimate_alpha"] = False
    if getattr(args, "estimate_alpha", None):
        values["estimate_alpha"] = True
    return Config(**values)


# ---------------------------------------------------------------- serialization


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if np.isfinite(x) else None


def dumps_json(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _ratio(num, den):
    if num is None or den is None or den <= 0:
        return None
    return num / den


def report_to_dict(result: ScoreResult, config: Config, ref_path=None, dist_path=None) -> dict:
    report = result.report
    subbands = []
    for r in report.per_subband:
        entry = {
            "subband": list(r.subband_id),
            "n_blocks": r.n_blocks,
            "alpha": r.alpha,
            "neural_noise_var": r.neural_noise_var,
            "numerator": {k: _num(v) for k, v in r.numerator.to_dict().items()},
            "denominator": {k: _num(v) for k, v in r.denominator.to_dict().items()},
            "bound_violations": r.bound_violations,
        }
        est = result.alpha_estimates.get(r.subband_id)
        if est is not None:
            entry["alpha_estimate"] = {
                "alpha": est.alpha,
                "kurtosis": est.kurtosis,
                "n_pairs": est.n_pairs,
                "clamped": bool(est.clamped),
                "experimental": True,
            }
        subbands.append(entry)
    return {
        "schema_version": SCHEMA_VERSION,
        "generator": f"ggsmvif {__version__}",
        "reference": None if ref_path is None else str(ref_path),
        "distorted": None if dist_path is None else str(dist_path),
        "config": asdict(config),
        "vif_lower": _num(report.vif_lower),
        "vif_approx": _num(report.vif_approx),
        "vif_upper": _num(report.vif_upper),
        "subbands": subbands,
        "notes": list(report.notes),
    }


SCORE_COLUMNS = [
    "subband",
    "n_blocks",
    "alpha",
    "neural_noise_var",
    "num_lower",
    "num_approx",
    "num_upper",
    "den_lower",
    "den_approx",
    "den_upper",
    "vif_lower",
    "vif_approx",
    "vif_upper",
]


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for v in row])
    return buf.getvalue()


def report_to_csv(report: QualityReport) -> str:
    rows = []
    for r in report.per_subband:
        n, d = r.numerator, r.denominator
        rows.append(
            [
                "-".join(str(p) for p in r.subband_id),
                r.n_blocks,
                r.alpha,
                r.neural_noise_var,
                n.lower,
                n.approx,
                n.upper,
                d.lower,
                d.approx,
                d.upper,
                _ratio(n.lower, d.upper),
                _ratio(n.approx, d.approx),
                _ratio(n.upper, d.lower),
            ]
        )
    total = sum(r.n_blocks for r in report.per_subband)
    rows.append(["all", total, None, None] + [None] * 6 + [report.vif_lower, report.vif_approx, report.vif_upper])
    return _csv_text(SCORE_COLUMNS, rows)


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- commands


def cmd_score(ref_path, dist_path, config: Config = Config(), out: Optional[str] = None) -> ScoreResult:
    """Score an image pair and write the report as JSON or CSV."""
    try:
        ref = load_image(ref_path)
        dist = load_image(dist_path)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read image: {exc}") from None
    if ref.shape != dist.shape:
        raise UsageError(f"image sizes differ: {ref.shape} vs {dist.shape}")
    result = score_images(ref, dist, config.score_options())
    if config.format == "csv":
        text = report_to_csv(result.report)
    else:
        text = dumps_json(report_to_dict(result, config, ref_path, dist_path))
    _emit(text, out)
    return result


def cmd_bounds(alpha, dim, z, gain, sigma_v2, sigma_n2, config: Config = Config(), out=None) -> dict:
    """Per-block bounds and approximation for ``C_U = I``."""
    params = MggdParams.isotropic(dim, alpha)
    channel = ChannelParams(gain, sigma_v2, sigma_n2)
    h = entropy(params)
    fim = fisher_information(params)
    tr_j = fim.trace if fim.finite else None
    ref = mi_reference_bounds(h, tr_j, z, channel, dim)
    dist = mi_distorted_bounds(h, tr_j, z, channel, dim)
    ref = replace(ref, approx=mi_approx_moment_matched(params, z, 1.0, sigma_n2))
    dist = replace(dist, approx=mi_approx_moment_matched(params, z, gain, channel.distorted_noise_var))
    payload = {
        "schema_version": SCHEMA_VERSION,
        "params": params.to_dict(),
        "z": z,
        "channel": {"gain": gain, "distortion_noise_var": sigma_v2, "neural_noise_var": sigma_n2},
        "entropy": h,
        "fisher_trace": _num(fim.trace),
        "reference": {k: _num(v) for k, v in ref.to_dict().items()},
        "distorted": {k: _num(v) for k, v in dist.to_dict().items()},
    }
    if config.format == "csv":
        rows = [["reference", ref.lower, ref.approx, ref.upper], ["distorted", dist.lower, dist.approx, dist.upper]]
        _emit(_csv_text(["channel", "lower", "approx", "upper"], rows), out)
    else:
        _emit(dumps_json(payload), out)
    return payload


def draw_mixing(z_law: str, n: int, seed: int) -> np.ndarray:
    """``const[:value]``, ``lognormal[:sigma]`` (``E[z^2] = 1``) or ``rayleigh`` (``E[z^2] = 1``)."""
    name, _, arg = z_law.partition(":")
    rng = np.random.default_rng([seed, 1])
    try:
        if name == "const":
            return np.full(n, float(arg) if arg else 1.0)
        if name == "lognormal":
            s = float(arg) if arg else 0.5
            return np.exp(s * rng.standard_normal(n) - s * s)
        if name == "rayleigh":
            return rng.rayleigh(np.sqrt(0.5), n)
    except ValueError:
        pass
    raise UsageError(f"unknown z law {z_law!r}; use const[:v], lognormal[:sigma] or rayleigh")


SIMULATE_COLUMNS = ["block", "z", "I_l", "I_approx", "I_u", "I_mc", "I_mc_se"]


def cmd_simulate(alpha, dim, z_law, gain, sigma_v2, sigma_n2, n, seed, mc_n=10**5, mc_inner=1000, out=None, fmt="csv"):
    """Distorted-channel bounds, approximation and nested Monte Carlo MI per synthetic block."""
    if n < 1:
        raise UsageError("need at least one block")
    params = MggdParams.isotropic(dim, alpha)
    channel = ChannelParams(gain, sigma_v2, sigma_n2)
    h = entropy(params)
    fim = fisher_information(params)
    tr_j = fim.trace if fim.finite else None
    z = draw_mixing(z_law, n, seed)
    rows = []
    for i, zi in enumerate(z):
        b = mi_distorted_bounds(h, tr_j, float(zi), channel, dim)
        approx = mi_approx_moment_matched(params, float(zi), gain, channel.distorted_noise_var)
        if mc_n > 0:
            est = mc_mutual_information(params, float(zi), gain, channel.distorted_noise_var, n=mc_n, seed=seed + i, n_inner=mc_inner)
            mc, se = est.value, est.std_error
        else:
            mc = se = None
        rows.append([i, float(zi), b.lower, approx, b.upper, mc, se])
    if fmt == "json":
        payload = {
            "schema_version": SCHEMA_VERSION,
            "params": params.to_dict(),
            "channel": {"gain": gain, "distortion_noise_var": sigma_v2, "neural_noise_var": sigma_n2},
            "z_law": z_law,
            "seed": seed,
            "rows": [dict(zip(SIMULATE_COLUMNS, r)) for r in rows],
        }
        _emit(dumps_json(payload), out)
    else:
        _emit(_csv_text(SIMULATE_COLUMNS, rows), out)
    return rows


def read_sample_csv(path) -> np.ndarray:
    """N x M matrix from a CSV whose first row is ``dim=M``."""
    try:
        with open(path, newline="") as fh:
            header = fh.readline().strip().split(",")[0].strip()
            key, _, value = header.partition("=")
            if key.strip() != "dim":
                raise UsageError(f"{path}: first row must be 'dim=M', got {header!r}")
            dim = int(value)
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None
    if data.shape[1] != dim:
        raise UsageError(f"{path}: header says dim={dim} but rows have {data.shape[1]} columns")
    if not np.all(np.isfinite(data)):
        raise UsageError(f"{path}: non-finite values")
    return data


def cmd_fit_mggd(data_path, out=None) -> dict:
    """Moment-matched MGGD of a sample matrix, as JSON."""
    data = read_sample_csv(data_path)
    n, m = data.shape
    if n <= m:
        raise UsageError(f"need more rows than columns, got {n} x {m}")
    target = moment_summary(data)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", KurtosisClampWarning)
        params = fit_mggd_by_moments(target)
    clamped = any(issubclass(w.category, KurtosisClampWarning) for w in caught)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "n_samples": n,
        "sample_kurtosis": target.kurtosis,
        "clamped": clamped,
        **params.to_dict(),
    }
    _emit(dumps_json(payload), out)
    return payload


def cmd_verify(config: Config = Config(), n_scale: int = 1, out=None) -> list:
    """Run the closed-form sweep; one line per criterion on stderr, full report on stdout/file."""
    results = verification.run_all(seed=config.seed, n_scale=n_scale)
    for r in results:
        print(r.line(), file=sys.stderr)
        for c in r.failures:
            print(f"    failed: {c.label} value={c.value} reference={c.reference} se={c.std_error}", file=sys.stderr)
    if config.format == "csv":
        rows = [[r.number, c.label, c.passed, c.value, c.reference, c.std_error] for r in results for c in r.checks]
        _emit(_csv_text(["criterion", "label", "passed", "value", "reference", "std_error"], rows), out)
    else:
        payload = {
            "schema_version": SCHEMA_VERSION,
            "seed": config.seed,
            "n_scale": n_scale,
            "passed": all(r.passed for r in results),
            "criteria": [r.to_dict() for r in results],
        }
        _emit(dumps_json(payload), out)
    return results


# ---------------------------------------------------------------- argument parsing


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--format", choices=("json", "csv"))
    p.add_argument("--out", help="write output here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ggsmvif", description="VIF bounds under a generalized Gaussian scale mixture")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="score a reference/distorted image pair")
    p.add_argument("reference")
    p.add_argument("distorted")
    p.add_argument("--levels", type=int)
    p.add_argument("--block-side", dest="block_side", type=int)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--alpha", type=float, help="fixed MGGD shape (default 1, the Gaussian case)")
    group.add_argument("--estimate-alpha", dest="estimate_alpha", action="store_true", default=None, help="estimate the shape per subband (experimental)")
    p.add_argument("--sigma-n", dest="sigma_n", help="neural noise: rel[:factor] (default rel:0.1) or abs:variance")
    p.add_argument("--window", type=int, help="blocks per channel-estimation window, a perfect square (default 16)")
    _add_common(p)

    p = sub.add_parser("bounds", help="MI bounds for one block with C_U = I")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--dim", type=int, default=9)
    p.add_argument("--z", type=float, default=1.0)
    p.add_argument("--gain", type=float, default=1.0)
    p.add_argument("--sigma-v2", dest="sigma_v2", type=float, default=0.0)
    p.add_argument("--sigma-n2", dest="sigma_n2", type=float, default=0.1)
    _add_common(p)

    p = sub.add_parser("simulate", help="bounds vs nested Monte Carlo on synthetic GGSM blocks")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--z-law", dest="z_law", default="lognormal:0.5")
    p.add_argument("--gain", type=float, default=1.0)
    p.add_argument("--sigma-v2", dest="sigma_v2", type=float, default=0.0)
    p.add_argument("--sigma-n2", dest="sigma_n2", type=float, default=0.1)
    p.add_argument("--blocks", type=int, default=8)
    p.add_argument("--mc-n", dest="mc_n", type=int, default=10**5, help="outer Monte Carlo size; 0 skips the oracle")
    p.add_argument("--mc-inner", dest="mc_inner", type=int, default=1000)
    _add_common(p)

    p = sub.add_parser("fit-mggd", help="moment-matched MGGD fit of a CSV sample matrix")
    p.add_argument("data")
    p.add_argument("--out")

    p = sub.add_parser("verify", help="run the closed-form vs Monte Carlo sweep")
    p.add_argument("--quick", action="store_true", help="divide Monte Carlo sizes by 10")
    _add_common(p)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    if args.command == "score":
        config = build_config(args)
        cmd_score(args.reference, args.distorted, config, args.out)
        return EXIT_OK
    if args.command == "bounds":
        config = build_config(argparse.Namespace(config=args.config, format=args.format, seed=args.seed))
        cmd_bounds(args.alpha, args.dim, args.z, args.gain, args.sigma_v2, args.sigma_n2, config, args.out)
        return EXIT_OK
    if args.command == "simulate":
        config = build_config(argparse.Namespace(config=args.config, format=args.format, seed=args.seed))
        fmt = args.format or "csv"
        cmd_simulate(
            args.alpha, args.dim, args.z_law, args.gain, args.sigma_v2, args.sigma_n2,
            args.blocks, config.seed, args.mc_n, args.mc_inner, args.out, fmt,
        )
        return EXIT_OK
    if args.command == "fit-mggd":
        cmd_fit_mggd(args.data, args.out)
        return EXIT_OK
    config = build_config(args)
    results = cmd_verify(config, n_scale=10 if args.quick else 1, out=args.out)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILURE


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        return run(argv)
    except (UsageError, GGSMError, ValueError) as exc:
        print(f"ggsmvif: error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except Exception as exc:  # noqa: BLE001
        logger.exception("internal error")
        print(f"ggsmvif: internal error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
