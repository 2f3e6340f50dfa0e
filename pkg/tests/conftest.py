import sys
from pathlib import Path

from hypothesis import settings

sys.path.insert(0, str(Path(__file__).resolve().parent))

settings.register_profile("repo", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("repo")
