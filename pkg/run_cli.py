#!/usr/bin/env python3
"""
Development launcher for the tensorlogic CLI
This script allows running the CLI without installing the package
"""

import sys
from pathlib import Path

# Add the project root to Python path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

try:
    from tensorlogic.cli import main
except ImportError as e:
    print(f"Import Error: {e}")
    print("\nInstall the dependencies first:")
    print("  pip install -r requirements.txt")
    print("\nFor CLI help: python run_cli.py --help")
    sys.exit(1)

main()
