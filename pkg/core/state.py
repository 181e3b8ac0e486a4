"""
State files — atomic JSON read/write for result documents and partial flushes.
"""
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict

import numpy as np

logger = logging.getLogger(__name__)


def _encode(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (set, tuple)):
        return list(obj)
    return str(obj)


def _finite_or_label(value: Any) -> Any:
    # JSON has no infinities; keep them readable instead of emitting Infinity
    if isinstance(value, float) and not math.isfinite(value):
        return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
    if isinstance(value, dict):
        return {k: _finite_or_label(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_finite_or_label(v) for v in value]
    return value


def load_state(path: Path) -> Dict[str, Any]:
    """Load JSON state file. Returns empty dict if missing/corrupt."""
    if not path.exists():
        return {}
    try:
        return json.loads(path.read_text())
    except Exception as e:
        logger.error(f"Failed to load state {path}: {e}")
        return {}


def save_state(path: Path, data: Dict[str, Any]) -> None:
    """Atomically save JSON state (write-to-tmp then rename)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix('.tmp')
    plain = json.loads(json.dumps(data, default=_encode))
    tmp.write_text(json.dumps(_finite_or_label(plain), indent=2, allow_nan=False))
    tmp.replace(path)
