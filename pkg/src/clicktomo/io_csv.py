"""CSV interchange with reproducibility headers.

Every output file starts with comment lines that embed the fully resolved
configuration (and the repetition index for click files), so the exact run
can be re-issued from the file alone.  Floating-point fields use 17
significant digits and round-trip bit-for-bit.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .config import RunConfig, dump_config, parse_config
from .errors import DataError
from .measurement import ClickRecord, DetectorPair, derive_setting

__all__ = [
    "CLICK_COLUMNS",
    "WIGNER_COLUMNS",
    "RHO_COLUMNS",
    "DIAGONAL_COLUMNS",
    "TRACE_COLUMNS",
    "PointRecords",
    "write_click_csv",
    "read_click_csv",
    "write_wigner_csv",
    "read_wigner_csv",
    "write_rho_csv",
    "read_rho_csv",
    "write_diagonal_csv",
    "read_diagonal_csv",
    "write_em_trace_csv",
    "read_em_trace_csv",
    "write_metrics_json",
    "embedded_config",
]

CLICK_COLUMNS = (
    "point_index",
    "re_gamma",
    "im_gamma",
    "alpha",
    "re_beta",
    "im_beta",
    "nu_c",
    "nu_d",
    "nu_bar",
    "y",
    "n_runs",
    "n_noclick",
)
WIGNER_COLUMNS = ("re_gamma", "im_gamma", "w_rec", "w_exact", "w_variance", "em_final_loglik")
RHO_COLUMNS = ("m", "n", "re", "im")
DIAGONAL_COLUMNS = ("n", "value")
TRACE_COLUMNS = ("iteration", "log_likelihood")

_CONFIG_BEGIN = "# config-begin"
_CONFIG_END = "# config-end"


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _header_lines(config_text: str, extra: "dict | None" = None) -> list[str]:
    lines = [_CONFIG_BEGIN]
    lines += [f"# {row}" if row else "#" for row in config_text.rstrip("\n").split("\n")]
    lines.append(_CONFIG_END)
    for key, value in (extra or {}).items():
        lines.append(f"# {key} = {value}")
    return lines


def _split_file(path) -> tuple[str, dict, list[str], list[str]]:
    """-> (embedded config text, extras, column names, data rows)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        raw = fh.read().split("\n")
    config_rows: list[str] = []
    extras: dict[str, str] = {}
    body: list[str] = []
    in_config = False
    seen_config = False
    for line in raw:
        if line == _CONFIG_BEGIN:
            in_config, seen_config = True, True
            continue
        if line == _CONFIG_END:
            in_config = False
            continue
        if in_config:
            config_rows.append(line[2:] if line.startswith("# ") else line.lstrip("#"))
            continue
        if line.startswith("#"):
            text = line[1:].strip()
            if "=" in text:
                key, _, value = text.partition("=")
                extras[key.strip()] = value.strip()
            continue
        if line:
            body.append(line)
    if not seen_config:
        raise DataError(f"{path}: missing embedded config header")
    if not body:
        raise DataError(f"{path}: no data rows")
    columns = body[0].split(",")
    return "\n".join(config_rows) + "\n", extras, columns, body[1:]


def embedded_config(path) -> str:
    """Extract the configuration text embedded in an output file."""
    return _split_file(path)[0]


@dataclass(frozen=True)
class PointRecords:
    """Click records belonging to one phase-space point."""

    point_index: int
    gamma: complex
    records: tuple[ClickRecord, ...]


def write_click_csv(path, cfg: RunConfig, repetition: int, points: "list[PointRecords]") -> None:
    lines = _header_lines(dump_config(cfg), {"repetition": repetition})
    lines.append(",".join(CLICK_COLUMNS))
    for point in points:
        for rec in point.records:
            s = rec.setting
            lines.append(
                ",".join(
                    (
                        str(point.point_index),
                        _fmt(point.gamma.real),
                        _fmt(point.gamma.imag),
                        _fmt(s.alpha),
                        _fmt(s.beta.real),
                        _fmt(s.beta.imag),
                        _fmt(s.detectors.nu_c),
                        _fmt(s.detectors.nu_d),
                        _fmt(s.nu_bar),
                        _fmt(s.y),
                        str(rec.n_runs),
                        _fmt(rec.n_noclick),
                    )
                )
            )
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_row(path, row_number: int, line: str, n_cols: int) -> list[str]:
    parts = line.split(",")
    if len(parts) != n_cols:
        raise DataError(
            f"{path}: row {row_number}: expected {n_cols} fields, found {len(parts)}"
        )
    return parts


def read_click_csv(path) -> tuple[RunConfig, int, list[PointRecords]]:
    """Read click records; settings are re-derived and checked bit-for-bit."""
    config_text, extras, columns, body = _split_file(path)
    if tuple(columns) != CLICK_COLUMNS:
        raise DataError(f"{path}: unexpected columns {columns}")
    cfg = parse_config(config_text)
    repetition = int(extras.get("repetition", 0))
    by_point: dict[int, PointRecords] = {}
    for k, line in enumerate(body, start=1):
        parts = _parse_row(path, k, line, len(CLICK_COLUMNS))
        try:
            point_index = int(parts[0])
            gamma = complex(float(parts[1]), float(parts[2]))
            alpha = float(parts[3])
            beta = complex(float(parts[4]), float(parts[5]))
            pair = DetectorPair(float(parts[6]), float(parts[7]))
            nu_bar, y = float(parts[8]), float(parts[9])
            n_runs = int(parts[10])
            n_noclick = float(parts[11])
        except ValueError as exc:
            raise DataError(f"{path}: row {k}: {exc}") from exc
        setting = derive_setting(alpha, beta, pair)
        if setting.nu_bar != nu_bar or setting.y != y:
            raise DataError(
                f"{path}: row {k}: stored derived fields disagree with re-derivation"
            )
        rec = ClickRecord(setting=setting, n_runs=n_runs, n_noclick=n_noclick)
        if point_index not in by_point:
            by_point[point_index] = PointRecords(point_index, gamma, (rec,))
        else:
            prev = by_point[point_index]
            if prev.gamma != gamma:
                raise DataError(f"{path}: row {k}: point {point_index} mixes gamma values")
            by_point[point_index] = PointRecords(point_index, gamma, prev.records + (rec,))
    points = [by_point[i] for i in sorted(by_point)]
    return cfg, repetition, points


def write_wigner_csv(
    path,
    cfg: RunConfig,
    grid_gammas: np.ndarray,
    w_rec: np.ndarray,
    w_exact: "np.ndarray | None" = None,
    w_variance: "np.ndarray | None" = None,
    loglik: "np.ndarray | None" = None,
) -> None:
    flat_g = np.asarray(grid_gammas).ravel()
    flat_w = np.asarray(w_rec, dtype=float).ravel()
    nan = np.full(flat_w.size, np.nan)
    ex = nan if w_exact is None else np.asarray(w_exact, dtype=float).ravel()
    var = nan if w_variance is None else np.asarray(w_variance, dtype=float).ravel()
    ll = nan if loglik is None else np.asarray(loglik, dtype=float).ravel()
    lines = _header_lines(dump_config(cfg))
    lines.append(",".join(WIGNER_COLUMNS))
    for g, w, e, v, l in zip(flat_g, flat_w, ex, var, ll):
        lines.append(
            ",".join((_fmt(g.real), _fmt(g.imag), _fmt(w), _fmt(e), _fmt(v), _fmt(l)))
        )
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def read_wigner_csv(path) -> tuple[RunConfig, np.ndarray, dict[str, np.ndarray]]:
    """-> (config, gammas, column arrays for w_rec / w_exact / w_variance / loglik)."""
    config_text, _, columns, body = _split_file(path)
    if tuple(columns) != WIGNER_COLUMNS:
        raise DataError(f"{path}: unexpected columns {columns}")
    cfg = parse_config(config_text)
    data = np.empty((len(body), len(WIGNER_COLUMNS)))
    for k, line in enumerate(body, start=1):
        parts = _parse_row(path, k, line, len(WIGNER_COLUMNS))
        try:
            data[k - 1] = [float(v) for v in parts]
        except ValueError as exc:
            raise DataError(f"{path}: row {k}: {exc}") from exc
    gammas = data[:, 0] + 1j * data[:, 1]
    cols = {
        "w_rec": data[:, 2],
        "w_exact": data[:, 3],
        "w_variance": data[:, 4],
        "em_final_loglik": data[:, 5],
    }
    return cfg, gammas, cols


def write_rho_csv(path, cfg: RunConfig, elements: np.ndarray) -> None:
    rho = np.asarray(elements)
    lines = _header_lines(dump_config(cfg))
    lines.append(",".join(RHO_COLUMNS))
    for m in range(rho.shape[0]):
        for n in range(rho.shape[1]):
            lines.append(
                ",".join((str(m), str(n), _fmt(rho[m, n].real), _fmt(rho[m, n].imag)))
            )
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def read_rho_csv(path) -> tuple[RunConfig, np.ndarray]:
    config_text, _, columns, body = _split_file(path)
    if tuple(columns) != RHO_COLUMNS:
        raise DataError(f"{path}: unexpected columns {columns}")
    cfg = parse_config(config_text)
    entries = []
    for k, line in enumerate(body, start=1):
        parts = _parse_row(path, k, line, len(RHO_COLUMNS))
        try:
            entries.append((int(parts[0]), int(parts[1]), float(parts[2]), float(parts[3])))
        except ValueError as exc:
            raise DataError(f"{path}: row {k}: {exc}") from exc
    dim = max(max(m, n) for m, n, _, _ in entries) + 1
    rho = np.zeros((dim, dim), dtype=complex)
    for m, n, re, im in entries:
        rho[m, n] = complex(re, im)
    return cfg, rho


def write_diagonal_csv(path, cfg: RunConfig, gamma: complex, values: np.ndarray) -> None:
    """Reconstructed displaced-diagonal values for one phase-space point."""
    lines = _header_lines(
        dump_config(cfg), {"re_gamma": _fmt(gamma.real), "im_gamma": _fmt(gamma.imag)}
    )
    lines.append(",".join(DIAGONAL_COLUMNS))
    for n, v in enumerate(np.asarray(values, dtype=float)):
        lines.append(f"{n},{_fmt(v)}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def read_diagonal_csv(path) -> tuple[RunConfig, complex, np.ndarray]:
    config_text, extras, columns, body = _split_file(path)
    if tuple(columns) != DIAGONAL_COLUMNS:
        raise DataError(f"{path}: unexpected columns {columns}")
    cfg = parse_config(config_text)
    gamma = complex(float(extras.get("re_gamma", 0.0)), float(extras.get("im_gamma", 0.0)))
    values = np.empty(len(body))
    for k, line in enumerate(body, start=1):
        parts = _parse_row(path, k, line, 2)
        try:
            idx, val = int(parts[0]), float(parts[1])
        except ValueError as exc:
            raise DataError(f"{path}: row {k}: {exc}") from exc
        if idx != k - 1:
            raise DataError(f"{path}: row {k}: indices must be consecutive from 0")
        values[idx] = val
    return cfg, gamma, values


def write_em_trace_csv(path, cfg: RunConfig, log_likelihood: np.ndarray) -> None:
    """Per-iteration log-likelihood of one reconstruction."""
    lines = _header_lines(dump_config(cfg))
    lines.append(",".join(TRACE_COLUMNS))
    for k, ll in enumerate(np.asarray(log_likelihood, dtype=float), start=1):
        lines.append(f"{k},{_fmt(ll)}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def read_em_trace_csv(path) -> tuple[RunConfig, np.ndarray]:
    config_text, _, columns, body = _split_file(path)
    if tuple(columns) != TRACE_COLUMNS:
        raise DataError(f"{path}: unexpected columns {columns}")
    cfg = parse_config(config_text)
    values = np.empty(len(body))
    for k, line in enumerate(body, start=1):
        parts = _parse_row(path, k, line, 2)
        try:
            values[k - 1] = float(parts[1])
        except ValueError as exc:
            raise DataError(f"{path}: row {k}: {exc}") from exc
    return cfg, values


def write_metrics_json(path, cfg: RunConfig, metrics: dict) -> None:
    payload = {"config": dump_config(cfg), **metrics}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(payload, fh, indent=2, sort_keys=False)
        fh.write("\n")
