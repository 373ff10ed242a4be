from __future__ import annotations
import json
import os
import threading
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np
import pandas as pd

from almab_errors import OutputError
from almab_state import RunHistory

LOCK = threading.Lock()

CSV_SCHEMA_VERSION = 1
FLOAT_FORMAT = "%.6g"

HISTORY_COLUMNS = [
    "round",
    "arm",
    "agent_arms",
    "reward_realized",
    "reward_mean_agents",
    "regret_pseudo_increment",
    "regret_pseudo_cum",
    "regret_realized_cum",
    "comm_cost_cum",
    "issue_round",
    "apply_round",
    "wall_ms",
]


def history_frame(history: RunHistory) -> pd.DataFrame:
    recs = history.records
    inc = np.array([r.regret_increment for r in recs])
    r_bar = np.array([r.reward_mean for r in recs])
    return pd.DataFrame({
        "round": [r.round for r in recs],
        "arm": [r.arm for r in recs],
        "agent_arms": ["|".join(str(a) for a in r.agent_arms) for r in recs],
        "reward_realized": [r.rewards[0] for r in recs],
        "reward_mean_agents": r_bar,
        "regret_pseudo_increment": inc,
        "regret_pseudo_cum": np.cumsum(inc),
        "regret_realized_cum": np.cumsum(history.mu_star - r_bar),
        "comm_cost_cum": np.cumsum([r.comm_cost for r in recs]),
        "issue_round": [r.issue_round for r in recs],
        "apply_round": [r.apply_round for r in recs],
        "wall_ms": [r.wall_ms for r in recs],
    }, columns=HISTORY_COLUMNS)


class HistoryRepo:
    """Каталог результатов: CSV/JSON/SVG пишутся атомарно (tmp + os.replace)."""

    def __init__(self, out_dir: Union[str, Path]):
        self.root = Path(out_dir)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise OutputError(f"cannot create output directory {self.root}: {e}") from e
        if not os.access(self.root, os.W_OK):
            raise OutputError(f"output directory {self.root} is not writable")

    def path(self, name: str) -> Path:
        return self.root / name

    def _replace(self, tmp: Path, dest: Path):
        try:
            os.replace(tmp, dest)
        except OSError as e:
            raise OutputError(f"cannot write {dest}: {e}") from e

    def write_text(self, name: str, text: str) -> Path:
        dest = self.path(name)
        tmp = dest.with_name(dest.name + ".tmp")
        with LOCK:
            try:
                with open(tmp, "w", encoding="utf-8", newline="\n") as f:
                    f.write(text)
            except OSError as e:
                raise OutputError(f"cannot write {dest}: {e}") from e
            self._replace(tmp, dest)
        return dest

    def write_json(self, name: str, data: Any) -> Path:
        return self.write_text(name, json.dumps(data, ensure_ascii=False, indent=2, sort_keys=True) + "\n")

    def write_csv(self, name: str, rows: Union[pd.DataFrame, Sequence[Dict[str, Any]]],
                  columns: Sequence[str] = ()) -> Path:
        df = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows), columns=list(columns) or None)
        return self.write_text(name, df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n"))

    def write_history(self, name: str, history: RunHistory) -> pd.DataFrame:
        """Пишет историю прогона в CSV и возвращает записанную таблицу."""
        frame = history_frame(history)
        self.write_csv(name, frame)
        return frame

    def read_csv(self, name: str) -> pd.DataFrame:
        p = self.path(name)
        try:
            return pd.read_csv(p)
        except (OSError, pd.errors.ParserError) as e:
            raise OutputError(f"cannot read {p}: {e}") from e

    def list_histories(self) -> List[str]:
        return sorted(p.name for p in self.root.glob("*_rep*.csv"))

    def update_manifest(self, patch: Dict[str, Any]) -> Dict[str, Any]:
        p = self.path("manifest.json")
        data: Dict[str, Any] = {}
        if p.exists():
            try:
                data = json.loads(p.read_text(encoding="utf-8"))
            except Exception:
                data = {}
        data.update(patch)
        data["csv_schema_version"] = CSV_SCHEMA_VERSION
        self.write_json("manifest.json", data)
        return data
