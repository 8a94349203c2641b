import sys
from pathlib import Path

# lets tests import the reference oracle as a plain module
sys.path.insert(0, str(Path(__file__).parent))
