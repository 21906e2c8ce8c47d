# backend/scripts/qdrt.py
"""
Usage:
  python backend/scripts/qdrt.py default-scene > scene.yaml
  python backend/scripts/qdrt.py compare --object pedestrian --n 5
Environment (or .env): QDRT_THREADS, QDRT_SEED, QDRT_PERMUTATIONS, QDRT_OUT_DIR,
QDRT_LOG_CONFIG, QDRT_LOG_LEVEL.
"""
import os
import sys

# The script is in backend/scripts/, the app package lives one level up
BACKEND_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
if BACKEND_ROOT not in sys.path:
    sys.path.insert(0, BACKEND_ROOT)

from app.cli import main

if __name__ == "__main__":
    sys.exit(main())
