#!/usr/bin/env python3
import sys
import os

# Calculate absolute paths
project_root = os.path.dirname(os.path.abspath(__file__))
cli_script = os.path.join(project_root, "src", "cli.py")

# Prefer the project virtualenv when one exists
candidates = [
    os.path.join(project_root, ".venv", "Scripts", "python.exe"),
    os.path.join(project_root, ".venv", "bin", "python"),
]
python = next((path for path in candidates if os.path.exists(path)), sys.executable)

# Execute
os.execv(python, [python, cli_script] + sys.argv[1:])
