"""Repository-root entrypoint.

Thin wrapper so `python main.py <command>` behaves like the `polycgo`
console script.
"""

import sys

from entrypoints.polycgo_cli import main

if __name__ == "__main__":
  sys.exit(main())
