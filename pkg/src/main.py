"""
flipscope - Entry Point
"""

import sys
from pathlib import Path

from dotenv import load_dotenv

# Add src to path
sys.path.insert(0, str(Path(__file__).parent))

from app import FlipscopeApp


def main():
    load_dotenv()

    app = FlipscopeApp()
    sys.exit(app.run(sys.argv[1:]))


if __name__ == "__main__":
    main()
