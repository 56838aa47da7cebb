"""Command-line entry points: calibrate, restore, evaluate, qq.

Commands read a JSON config (``--config``) and accept flag overrides for the
common knobs.  Exit codes: 0 success, 2 configuration error, 3 I/O error,
4 denoiser transport/protocol error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import io as formats
from .bypass import (
    DEFAULT_ALPHA,
    DEFAULT_STD_THRESHOLD,
    calibrate_bypass_step,
    residual,
)
from .denoiser import DenoiserError, denoiser_from_config
from .metrics import psnr, qq_normal, ssim
from .operators import operator_from_config
from .restoration import RestorationConfig, restore
from .rng import gaussian_field
from .schedule import make_linear_schedule, step_grid

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DENOISER = 4

CONFIG_VERSION = 1


class ConfigError(Exception):
    """Invalid, missing, or inconsistent configuration."""


def load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            cfg = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path}: expected a JSON object at the top level")
    if cfg.get("version") != CONFIG_VERSION:
        raise ConfigError(f"config {path}: 'version' must be {CONFIG_VERSION}")
    return cfg


def serialize_config(cfg: dict) -> str:
    """Canonical JSON text; parse_config inverts it exactly."""
    return json.dumps(cfg, sort_keys=True, indent=2)


def parse_config(text: str) -> dict:
    return json.loads(text)


def _schedule_from_config(cfg: dict):
    spec = cfg.get("schedule", {})
    try:
        return make_linear_schedule(
            int(spec.get("total_steps", 1000)),
            float(spec.get("beta_start", 1e-4)),
            float(spec.get("beta_end", 0.02)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"schedule: {exc}") from None


def _operator_from_config(cfg: dict):
    spec = cfg.get("operator")
    if not isinstance(spec, dict):
        raise ConfigError("config needs an 'operator' object")
    try:
        return operator_from_config(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"operator: {exc}") from None


def _denoiser_spec(cfg: dict) -> dict:
    spec = cfg.get("denoiser", {"kind": "zero"})
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("denoiser section must be an object with a 'kind'")
    if spec["kind"] == "external" and ":" not in str(spec.get("address", "")):
        raise ConfigError("external denoiser needs an 'address' of the form host:port")
    return spec


def _denoiser_flag(value: str, current) -> dict:
    if value == "zero":
        return {"kind": "zero"}
    if value == "oracle":
        if isinstance(current, dict) and str(current.get("kind", "")).startswith("oracle"):
            return current
        return {"kind": "oracle_gaussian", "mean": 0.0, "var": 1.0}
    if value.startswith("external:"):
        address = value[len("external:"):]
        if ":" not in address:
            raise ConfigError("--denoiser external:<addr> needs addr as host:port")
        return {"kind": "external", "address": address}
    raise ConfigError(f"unknown denoiser {value!r} (choose zero, oracle, external:<addr>)")


def apply_overrides(cfg: dict, args: argparse.Namespace) -> dict:
    cfg = dict(cfg)
    if args.eta is not None:
        cfg["eta"] = args.eta
    if args.steps is not None:
        cfg["num_steps"] = args.steps
    if args.bypass is not None:
        cfg["bypass"] = args.bypass
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.jobs is not None:
        cfg["jobs"] = args.jobs
    if args.denoiser is not None:
        cfg["denoiser"] = _denoiser_flag(args.denoiser, cfg.get("denoiser"))
    return cfg


def _parse_bypass(value):
    """'off'/None -> None, 'auto' -> 'auto', anything else -> step index."""
    if value is None or value == "off":
        return None
    if value == "auto":
        return "auto"
    try:
        t = int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bypass must be auto, off, or a step index; got {value!r}") from None
    if t < 1:
        raise ConfigError(f"bypass step must be >= 1, got {t}")
    return t


def _load_json_file(path, what: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise FileNotFoundError(f"{what} not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValueError(f"{what} {path}: invalid JSON: {exc}") from None


def _write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")


def _load_array(path) -> np.ndarray:
    if str(path).endswith(".ntf"):
        return formats.load_tensor(path).astype(np.float64)
    return formats.load_image(path)


def _save_array(path, x: np.ndarray) -> None:
    if str(path).endswith(".ntf"):
        formats.save_tensor(path, x)
    else:
        formats.save_image(path, x)


def _resolve(base: str, path: str) -> str:
    return path if os.path.isabs(path) else os.path.join(base, path)


def cmd_calibrate(cfg: dict) -> int:
    schedule = _schedule_from_config(cfg)
    op = _operator_from_config(cfg)
    k = float(cfg.get("threshold_k", DEFAULT_STD_THRESHOLD))
    alpha = float(cfg.get("alpha", DEFAULT_ALPHA))
    seed = int(cfg.get("seed", 0))
    num_steps = int(cfg.get("num_steps", 100))

    manifest_path = cfg.get("calibration_manifest")
    if not manifest_path:
        raise ConfigError("config needs 'calibration_manifest' (path to the pair list)")
    manifest = _load_json_file(manifest_path, "calibration manifest")
    entries = manifest.get("pairs")
    if not isinstance(entries, list) or not entries:
        raise ConfigError(f"calibration manifest {manifest_path}: 'pairs' must be a non-empty list")

    base = os.path.dirname(os.path.abspath(manifest_path))
    pairs = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or "clean" not in entry:
            raise ConfigError(f"calibration manifest {manifest_path}: entry {i} needs a 'clean' path")
        x0 = _load_array(_resolve(base, entry["clean"]))
        try:
            if "degraded" in entry:
                y = _load_array(_resolve(base, entry["degraded"]))
                op.pinv_apply(y)  # shape check up front
            else:
                y = op.apply(x0)
        except ValueError as exc:
            raise ConfigError(f"calibration entry {i}: {exc}") from None
        pairs.append((x0, y))

    try:
        report = calibrate_bypass_step(
            pairs, schedule, op, k=k, alpha=alpha, seed=seed,
            per_channel=bool(cfg.get("per_channel", False)),
            task_id=str(cfg.get("task", "")),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    out_path = cfg.get("report", "calibration_report.json")
    _write_json(out_path, report.to_dict())

    grid = step_grid(schedule, num_steps, report.bypass_step)
    print(f"bypass step t* = {report.bypass_step} (schedule T = {schedule.total_steps})")
    print(f"# of steps when bypassing: {len(grid)} of {num_steps} grid steps")
    print(f"criteria: normality p >= {alpha}; |std(residual) - sqrt(1 - abar_t)| < {k}")
    print(f"{'sample':>6}  {'t_i':>5}  {'K^2':>9}  {'p':>8}  {'std gap':>10}")
    for i, t_i in enumerate(report.min_steps):
        note = "  NO PASSING STEP" if i in report.unsatisfied else ""
        if report.diagnostics:
            d = report.diagnostics[i][-1]
            print(f"{i:>6}  {t_i:>5}  {d.k2:>9.3f}  {d.p_value:>8.4f}  {d.std_gap:>10.3e}{note}")
        else:
            print(f"{i:>6}  {t_i:>5}{note}")
    print(f"report written to {out_path}")
    return EXIT_OK


def cmd_restore(cfg: dict) -> int:
    schedule = _schedule_from_config(cfg)
    op = _operator_from_config(cfg)
    denoiser_spec = _denoiser_spec(cfg)
    eta = float(cfg.get("eta", 1.0))
    num_steps = int(cfg.get("num_steps", 100))
    seed = int(cfg.get("seed", 0))
    jobs = max(1, int(cfg.get("jobs", 1)))

    bypass = _parse_bypass(cfg.get("bypass", "off"))
    bypass_step = None
    if bypass == "auto":
        report_path = cfg.get("calibration_report")
        if not report_path:
            raise ConfigError("bypass=auto requires 'calibration_report' in the config")
        report = _load_json_file(report_path, "calibration report")
        try:
            bypass_step = int(report["bypass_step"])
        except (KeyError, TypeError, ValueError):
            raise ValueError(f"calibration report {report_path}: missing 'bypass_step'") from None
    elif bypass is not None:
        bypass_step = bypass

    inputs = cfg.get("inputs")
    outputs = cfg.get("outputs")
    if not isinstance(inputs, list) or not inputs:
        raise ConfigError("config needs a non-empty 'inputs' list")
    if not isinstance(outputs, list) or len(outputs) != len(inputs):
        raise ConfigError("'outputs' must list one path per input")

    try:
        grid = step_grid(schedule, num_steps, bypass_step)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    def run_one(i: int) -> dict:
        started = time.perf_counter()
        y = _load_array(inputs[i])
        # One denoiser per image: oracle kinds are cheap, the external kind
        # must not share a connection across threads.
        den = denoiser_from_config(denoiser_spec)
        try:
            rc = RestorationConfig(
                schedule=schedule, operator=op, denoiser=den, eta=eta,
                num_steps=num_steps, bypass_step=bypass_step, seed=seed + i,
            )
            try:
                out = restore(y, rc)
            except ValueError as exc:
                raise ConfigError(f"{inputs[i]}: {exc}") from None
        finally:
            close = getattr(den, "close", None)
            if close is not None:
                close()
        _save_array(outputs[i], out)
        return {
            "input": inputs[i],
            "output": outputs[i],
            "seed": seed + i,
            "seconds": round(time.perf_counter() - started, 6),
        }

    if jobs == 1:
        records = [run_one(i) for i in range(len(inputs))]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(run_one, range(len(inputs))))

    manifest = {
        "version": CONFIG_VERSION,
        "command": "restore",
        "schedule": {
            "total_steps": schedule.total_steps,
            "beta_start": float(schedule.beta[0]),
            "beta_end": float(schedule.beta[-1]),
        },
        "operator": op.config(),
        "denoiser": denoiser_spec,
        "eta": eta,
        "num_steps": num_steps,
        "bypass": "off" if bypass is None else bypass,
        "bypass_step": bypass_step,
        "grid": [int(t) for t in grid],
        "steps_executed": int(len(grid)),
        "base_seed": seed,
        "images": records,
    }
    manifest_path = cfg.get("manifest") or os.path.join(
        os.path.dirname(os.path.abspath(outputs[0])), "run_manifest.json"
    )
    _write_json(manifest_path, manifest)
    print(
        f"restored {len(records)} image(s): steps executed = {len(grid)}, "
        f"eta = {eta}, bypass step = {bypass_step if bypass_step is not None else 'off'}"
    )
    print(f"run manifest written to {manifest_path}")
    return EXIT_OK


def _fmt_metric(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.4f}"


def _json_metric(value: float):
    return "inf" if math.isinf(value) else value


def cmd_evaluate(cfg: dict) -> int:
    entries = cfg.get("pairs")
    if not isinstance(entries, list) or not entries:
        raise ConfigError("config needs a non-empty 'pairs' list of {restored, reference}")

    rows = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or "restored" not in entry or "reference" not in entry:
            raise ConfigError(f"pairs entry {i} must name both 'restored' and 'reference'")
        a = _load_array(entry["restored"])
        b = _load_array(entry["reference"])
        if a.shape != b.shape:
            raise ConfigError(
                f"unpaired files: {entry['restored']} is {a.shape}, {entry['reference']} is {b.shape}"
            )
        # Metrics run in [0, 1] output space.
        xa = (a + 1.0) / 2.0
        xb = (b + 1.0) / 2.0
        rows.append({
            "restored": entry["restored"],
            "reference": entry["reference"],
            "psnr": psnr(xa, xb, peak=1.0),
            "ssim": ssim(xa, xb),
        })

    mean_psnr = float(np.mean([r["psnr"] for r in rows]))
    mean_ssim = float(np.mean([r["ssim"] for r in rows]))
    method = str(cfg.get("method", "restore"))
    steps = cfg.get("steps_executed")
    if steps is None and cfg.get("run_manifest"):
        steps = _load_json_file(cfg["run_manifest"], "run manifest").get("steps_executed")

    for r in rows:
        print(f"{r['restored']}: PSNR = {_fmt_metric(r['psnr'])} dB, SSIM = {_fmt_metric(r['ssim'])}")
    print(f"{'method':<20}{'# of steps':>12}{'PSNR':>10}{'SSIM':>10}")
    steps_text = "-" if steps is None else str(int(steps))
    print(f"{method:<20}{steps_text:>12}{_fmt_metric(mean_psnr):>10}{_fmt_metric(mean_ssim):>10}")

    payload = {
        "version": CONFIG_VERSION,
        "method": method,
        "steps_executed": None if steps is None else int(steps),
        "per_image": [
            {**r, "psnr": _json_metric(r["psnr"])} for r in rows
        ],
        "mean": {"psnr": _json_metric(mean_psnr), "ssim": mean_ssim},
    }
    out_path = cfg.get("report", "evaluation.json")
    _write_json(out_path, payload)
    print(f"evaluation written to {out_path}")
    return EXIT_OK


def cmd_qq(cfg: dict) -> int:
    out_path = cfg.get("output", "qq.csv")
    if "residual" in cfg:
        spec = cfg["residual"]
        if not isinstance(spec, dict) or "clean" not in spec or "t" not in spec:
            raise ConfigError("'residual' needs at least 'clean' and 't'")
        schedule = _schedule_from_config(cfg)
        op = _operator_from_config(cfg)
        x0 = _load_array(spec["clean"])
        try:
            y = _load_array(spec["degraded"]) if "degraded" in spec else op.apply(x0)
            # Tag matches the calibration draw for this sample index, so the
            # CSV shows exactly the residual the calibration scan tested.
            eps = gaussian_field(int(cfg.get("seed", 0)), int(spec.get("sample_index", 0)), x0.shape)
            values = residual(schedule, op, x0, y, int(spec["t"]), eps)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    elif "input" in cfg:
        values = _load_array(cfg["input"])
    else:
        raise ConfigError("qq config needs either 'input' (tensor path) or 'residual'")

    qq = qq_normal(np.asarray(values).ravel())
    formats.save_qq_csv(out_path, qq)
    print(
        f"wrote {out_path}: n = {qq.theoretical_quantiles.size}, "
        f"max deviation from diagonal = {qq.max_deviation():.6f}"
    )
    return EXIT_OK


_COMMANDS = {
    "calibrate": cmd_calibrate,
    "restore": cmd_restore,
    "evaluate": cmd_evaluate,
    "qq": cmd_qq,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bypassdiff",
        description="Zero-shot diffusion restoration with calibrated start-step bypass.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "calibrate": "find the minimal safe start step over a calibration set",
        "restore": "restore degraded inputs",
        "evaluate": "PSNR/SSIM table for restored/reference pairs",
        "qq": "write normal Q-Q data for a residual or tensor as CSV",
    }
    for name, text in helps.items():
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", required=True, help="JSON config path")
        s.add_argument("--eta", type=float, help="noise mixing weight in [0, 1]")
        s.add_argument("--steps", type=int, help="grid size (number of uniform steps)")
        s.add_argument("--bypass", help="auto, off, or an explicit step index")
        s.add_argument("--seed", type=int, help="base seed")
        s.add_argument("--jobs", type=int, help="parallel images")
        s.add_argument("--denoiser", help="zero, oracle, or external:<host:port>")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = apply_overrides(load_config(args.config), args)
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DenoiserError as exc:
        print(f"denoiser error: {exc}", file=sys.stderr)
        return EXIT_DENOISER
    except (OSError, ValueError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
