import sys
from pathlib import Path

# make the reference interpreter importable when pytest is run from anywhere
sys.path.insert(0, str(Path(__file__).parent))
