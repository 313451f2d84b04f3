import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent
CONFIGS = HERE.parent / "configs"

# make the oracle helpers importable as a plain module
if str(HERE) not in sys.path:
    sys.path.insert(0, str(HERE))
