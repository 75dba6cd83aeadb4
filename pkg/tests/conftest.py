import sys
from pathlib import Path

# the brute-force oracles live next to the tests
sys.path.insert(0, str(Path(__file__).parent))
