"""Execute the command examples and the code snippet from README.md."""

import io
import json
import re
import shlex
from pathlib import Path

import numpy as np
import pytest

from affine_reilly.cli import main

README = Path(__file__).resolve().parent.parent / "README.md"
TEXT = README.read_text(encoding="utf-8")
COMMANDS = [line.strip()[2:] for line in TEXT.splitlines() if line.strip().startswith("$ affine-reilly ")]


def test_readme_has_examples():
    assert len(COMMANDS) >= 10


@pytest.mark.parametrize("command", COMMANDS)
def test_readme_command(command):
    argv = shlex.split(command)
    assert argv[0] == "affine-reilly"
    buf = io.StringIO()
    assert main(argv[1:], out_stream=buf) == 0
    json.loads(buf.getvalue())


def test_readme_python_snippet():
    block = re.search(r"```python\n(.*?)```", TEXT, re.S).group(1)
    scope = {"points": np.random.default_rng(0).uniform(0.1, 1.0, (5, 2))}
    exec(block, scope)
    f = scope["f"]
    assert abs(f.eval([0.0, 1.0]) - np.sin(1.0)) <= 1e-15
