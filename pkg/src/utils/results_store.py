import logging
import os
from collections import defaultdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd
from dotenv import load_dotenv

logger = logging.getLogger(__name__)

# =========================
# LOAD ENV VARIABLES
# =========================
load_dotenv()


def default_out_dir() -> Path:
    return Path(os.getenv("VLT_OUT_DIR", "results"))


# =========================
# RESULTS STORE
# =========================

class ResultsStore:
    """
    Collects summary records per collection and writes each collection as
    <out_dir>/<collection>.csv. Records carry a UTC timestamp unless the
    store runs in deterministic mode.
    """

    def __init__(self, out_dir: Optional[Path] = None, deterministic: bool = False):
        self.out_dir = Path(out_dir) if out_dir is not None else default_out_dir()
        self.deterministic = deterministic
        self.collections: Dict[str, List[dict]] = defaultdict(list)

    # --------------------------------------------------
    # PUSH HELPER
    # --------------------------------------------------
    def push_record(self, collection: str, data: dict) -> dict:
        record = dict(data)
        if not self.deterministic:
            record["timestamp"] = datetime.now(timezone.utc).isoformat()
        self.collections[collection].append(record)
        return record

    def frame(self, collection: str) -> pd.DataFrame:
        return pd.DataFrame(self.collections.get(collection, []))

    def flush(self) -> Dict[str, Path]:
        written = {}
        for collection, records in self.collections.items():
            path = self.out_dir / f"{collection}.csv"
            pd.DataFrame(records).to_csv(path, index=False, na_rep="")
            written[collection] = path
            logger.info("wrote %d %s record(s) to %s", len(records), collection, path)
        return written
