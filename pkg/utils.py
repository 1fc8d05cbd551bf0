import logging
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)


def setup_logging(level: int = logging.INFO) -> None:
    if not logging.getLogger().handlers:
        logging.basicConfig(
            level=level,
            format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S",
            handlers=[logging.StreamHandler()],
        )
        logger.info("Logging configured successfully.")


def parse_log_level(name: Optional[str], default: int = logging.INFO) -> int:
    if not name:
        return default
    level = logging.getLevelName(name.strip().upper())
    if isinstance(level, int):
        return level
    logger.warning(f"Unknown log level '{name}', falling back to default.")
    return default


def format_matrix(matrix: Optional[np.ndarray], precision: int = 6) -> str:
    if matrix is None:
        return "-"
    try:
        array = np.atleast_2d(np.asarray(matrix, dtype=float))
        return "\n".join(
            " ".join(f"{value:.{precision}f}" for value in row) for row in array
        )
    except (ValueError, TypeError):
        logger.error(f"Could not format value '{matrix}' as a matrix.", exc_info=True)
        return str(matrix)


def format_seconds(value: Optional[float]) -> str:
    if value is None:
        return "-"
    if value < 1e-3:
        return f"{value * 1e6:.1f} us"
    if value < 1.0:
        return f"{value * 1e3:.1f} ms"
    return f"{value:.2f} s"
