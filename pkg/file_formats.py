# file_formats.py
"""
Plain-text formats used by the command line.

Model file::

    # comment
    X Y
    <X lines of X numbers>   P, row-major
    <X lines of Y numbers>   B
    <1 line of X numbers>    pi0

Observation file: one 1-based label per line. Benchmark config: flat
``key=value`` lines. '#' starts a comment everywhere; every parse error
carries the line number it was found on.
"""

import logging
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

import constants as C
from hmm_core.errors import ModelFileError
from hmm_core.models import BenchmarkConfig, HmmModel, MomentMatrix, ObservationSequence

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

ARM_ALIASES = {
    "mm": C.METHOD_MM,
    "mom": C.METHOD_MM,
    "2s": C.METHOD_TWO_STEP,
    "newton": C.METHOD_TWO_STEP,
    "em": C.METHOD_EM,
    "em-mm": C.METHOD_EM_MM,
    "em_mom": C.METHOD_EM_MM,
    "em-true": C.METHOD_EM_TRUE,
    "em_true": C.METHOD_EM_TRUE,
}

CONFIG_KEYS = {
    "x": "num_states",
    "y": "num_outputs",
    "sizes": "sample_sizes",
    "reps": "replicates",
    "seed": "master_seed",
    "arms": "arms",
    "bound": "bound_policy",
    "em_tol": "em_tol",
    "em_max_iter": "em_max_iter",
    "output": "output_dir",
    "workers": "workers",
}


def _content_lines(text: str) -> Iterator[Tuple[int, List[str]]]:
    for number, raw in enumerate(text.splitlines(), start=1):
        content = raw.split(C.COMMENT_CHAR, 1)[0].strip()
        if content:
            yield number, content.split()


def _numbers(tokens: Sequence[str], expected: int, line: int, what: str) -> np.ndarray:
    if len(tokens) != expected:
        raise ModelFileError(f"{what}: expected {expected} numbers, found {len(tokens)}", line)
    try:
        values = np.array([float(token) for token in tokens])
    except ValueError as e:
        raise ModelFileError(f"{what}: {e}", line) from e
    if not np.all(np.isfinite(values)):
        raise ModelFileError(f"{what}: non-finite value", line)
    return values


def _check_distribution(values: np.ndarray, line: int, what: str) -> None:
    if np.any(values < 0):
        raise ModelFileError(f"{what} has a negative entry", line)
    total = values.sum()
    if abs(total - 1.0) > C.ROW_SUM_TOLERANCE:
        raise ModelFileError(f"{what} row sum {total:.12g}", line)


def _read_header(lines: Iterator[Tuple[int, List[str]]]) -> Tuple[int, int, int]:
    try:
        line, tokens = next(lines)
    except StopIteration:
        raise ModelFileError("file is empty", None)
    if len(tokens) != 2:
        raise ModelFileError(f"header must be 'X Y', found '{' '.join(tokens)}'", line)
    try:
        x, y = int(tokens[0]), int(tokens[1])
    except ValueError:
        raise ModelFileError(f"header must hold two integers, found '{' '.join(tokens)}'", line)
    if x < 1 or y < 1:
        raise ModelFileError("X and Y must be positive", line)
    return x, y, line


def _read_rows(
    lines: Iterator[Tuple[int, List[str]]], count: int, width: int, what: str, last_line: int
) -> Tuple[np.ndarray, List[int]]:
    rows, numbers = [], []
    for index in range(count):
        try:
            line, tokens = next(lines)
        except StopIteration:
            raise ModelFileError(f"unexpected end of file while reading {what}", last_line)
        rows.append(_numbers(tokens, width, line, f"{what} row {index + 1}"))
        numbers.append(line)
        last_line = line
    return np.vstack(rows), numbers


def parse_model(text: str, check_distributions: bool = True) -> HmmModel:
    """
    With `check_distributions=False` only the layout and the numbers are
    checked; sign and row-sum problems are left to `validate_model`.
    """
    lines = _content_lines(text)
    x, y, line = _read_header(lines)

    P, p_lines = _read_rows(lines, x, x, "P", line)
    B, b_lines = _read_rows(lines, x, y, "B", p_lines[-1])
    pi0, pi_lines = _read_rows(lines, 1, x, "pi0", b_lines[-1])

    if check_distributions:
        for i, number in enumerate(p_lines):
            _check_distribution(P[i], number, f"P row {i + 1}")
        for i, number in enumerate(b_lines):
            _check_distribution(B[i], number, f"B row {i + 1}")
        _check_distribution(pi0[0], pi_lines[0], "pi0")

    extra = next(lines, None)
    if extra is not None:
        raise ModelFileError("trailing content after pi0", extra[0])
    return HmmModel(P=P, B=B, pi0=pi0[0])


def read_model(path: PathLike, check_distributions: bool = True) -> HmmModel:
    model = parse_model(Path(path).read_text(encoding="utf-8"), check_distributions)
    logger.info(f"✅ Loaded model with X={model.num_states}, Y={model.num_outputs} from {path}")
    return model


def format_model(model: HmmModel) -> str:
    def row(values) -> str:
        return " ".join(f"{v:.17g}" for v in values)

    lines = [f"{model.num_states} {model.num_outputs}", "# P"]
    lines += [row(r) for r in model.P]
    lines.append("# B")
    lines += [row(r) for r in model.B]
    lines.append("# pi0")
    lines.append(row(model.pi0))
    return "\n".join(lines) + "\n"


def write_model(model: HmmModel, path: PathLike) -> None:
    Path(path).write_text(format_model(model), encoding="utf-8")


def parse_lower_bound_matrix(text: str) -> np.ndarray:
    """
    Elementwise lower bound L <= P in the model file layout. Only the header
    and the first X×X block are read; entries must be nonnegative.
    """
    lines = _content_lines(text)
    x, _, line = _read_header(lines)
    L, l_lines = _read_rows(lines, x, x, "L", line)
    for i, number in enumerate(l_lines):
        if np.any(L[i] < 0):
            raise ModelFileError(f"L row {i + 1} has a negative entry", number)
    return L


def read_lower_bound_matrix(path: PathLike) -> np.ndarray:
    return parse_lower_bound_matrix(Path(path).read_text(encoding="utf-8"))


def parse_observations(text: str, num_outputs: int) -> ObservationSequence:
    labels = []
    for line, tokens in _content_lines(text):
        if len(tokens) != 1:
            raise ModelFileError("expected one label per line", line)
        try:
            label = int(tokens[0])
        except ValueError:
            raise ModelFileError(f"label '{tokens[0]}' is not an integer", line)
        if not 1 <= label <= num_outputs:
            raise ModelFileError(f"label {label} outside 1..{num_outputs}", line)
        labels.append(label - 1)
    if len(labels) < 2:
        raise ModelFileError(f"need at least 2 observations, found {len(labels)}", None)
    return ObservationSequence(labels=np.array(labels, dtype=np.int64), num_outputs=num_outputs)


def read_observations(path: PathLike, num_outputs: int) -> ObservationSequence:
    return parse_observations(Path(path).read_text(encoding="utf-8"), num_outputs)


def format_observations(obs: ObservationSequence) -> str:
    return "\n".join(str(int(label) + 1) for label in obs.labels) + "\n"


def write_observations(obs: ObservationSequence, path: PathLike) -> None:
    Path(path).write_text(format_observations(obs), encoding="utf-8")


def parse_sizes(text: str) -> List[int]:
    """'1e3,1e4' -> [1000, 10000]."""
    sizes = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        value = float(token)
        if not value.is_integer():
            raise ValueError(f"sample size '{token}' is not an integer")
        sizes.append(int(value))
    return sizes


def parse_arms(text: str) -> List[str]:
    arms = []
    for token in text.split(","):
        token = token.strip().lower()
        if not token:
            continue
        if token not in ARM_ALIASES:
            raise ValueError(f"unknown estimator arm '{token}'")
        arms.append(ARM_ALIASES[token])
    return arms


def _config_value(key: str, value: str):
    if key == "sizes":
        return parse_sizes(value)
    if key == "arms":
        return parse_arms(value)
    return value


def parse_config(text: str, overrides: Optional[Dict[str, object]] = None) -> BenchmarkConfig:
    """
    Flat key=value benchmark configuration. Keys: x, y, sizes, reps, seed,
    arms, bound, em_tol, em_max_iter, output, workers. `overrides` uses the
    BenchmarkConfig field names and wins over the file.
    """
    fields: Dict[str, object] = {}
    for line, tokens in _content_lines(text):
        content = " ".join(tokens)
        if "=" not in content:
            raise ModelFileError(f"expected key=value, found '{content}'", line)
        key, value = (part.strip() for part in content.split("=", 1))
        key = key.lower()
        if key not in CONFIG_KEYS:
            raise ModelFileError(f"unknown configuration key '{key}'", line)
        try:
            fields[CONFIG_KEYS[key]] = _config_value(key, value)
        except ValueError as e:
            raise ModelFileError(str(e), line) from e

    fields.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return BenchmarkConfig(**fields)
    except ValidationError as e:
        logger.error(f"❌ Invalid benchmark configuration: {e}")
        raise


def read_config(path: PathLike, overrides: Optional[Dict[str, object]] = None) -> BenchmarkConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), overrides)


def write_moments_csv(moments: MomentMatrix, path: PathLike) -> None:
    """Y header columns (output labels 1..Y), Y rows."""
    labels = [str(i + 1) for i in range(moments.num_outputs)]
    frame = pd.DataFrame(moments.matrix, columns=labels)
    frame.to_csv(path, index=False, float_format=C.CSV_FLOAT_FORMAT)
