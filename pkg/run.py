"""
Run the pipeline without installing the package.

    python run.py composite --config config.yaml --clips clips.txt

Same commands and exit codes as the `embodiswap` console script.
"""

import sys

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
