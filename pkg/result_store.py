# result_store.py
import logging
from pathlib import Path
from typing import Optional, Union

import pandas as pd

from hmm_core.ports import ResultStore
import constants as C

logger = logging.getLogger(__name__)


class CsvResultStore(ResultStore):
    """
    Benchmark tables as UTF-8 CSV files in one directory, named after the
    system size: benchmark_X{x}_Y{y}_median.csv and ..._raw.csv.
    """

    def __init__(self, output_dir: Union[str, Path], num_states: int, num_outputs: int):
        self.output_dir = Path(output_dir)
        self.median_path = self.output_dir / C.MEDIAN_FILE_TEMPLATE.format(
            x=num_states, y=num_outputs
        )
        self.raw_path = self.output_dir / C.RAW_FILE_TEMPLATE.format(
            x=num_states, y=num_outputs
        )

    def _write(self, df: pd.DataFrame, path: Path, columns) -> None:
        missing = [column for column in columns if column not in df.columns]
        if missing:
            raise ValueError(f"table is missing columns {missing}")
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
            df[list(columns)].to_csv(
                path, index=False, float_format=C.CSV_FLOAT_FORMAT, encoding="utf-8"
            )
            logger.info(f"💾 {len(df)} rows written to {path}")
        except OSError as e:
            logger.error(f"❌ Failed to write {path}: {e}", exc_info=True)
            raise

    def _read(self, path: Path) -> Optional[pd.DataFrame]:
        if not path.exists():
            logger.warning(f"⚠️ {path} does not exist yet.")
            return None
        return pd.read_csv(path, encoding="utf-8")

    def save_medians(self, df: pd.DataFrame) -> None:
        self._write(df, self.median_path, C.MEDIAN_COLUMNS)

    def save_raw(self, df: pd.DataFrame) -> None:
        self._write(df, self.raw_path, C.RAW_COLUMNS)

    def load_medians(self) -> Optional[pd.DataFrame]:
        return self._read(self.median_path)

    def load_raw(self) -> Optional[pd.DataFrame]:
        df = self._read(self.raw_path)
        if df is not None:
            df["message"] = df["message"].fillna("")
        return df
