import io
import json
import math

import pytest

from src.errors import ValidationError
from src.utils import bound_from_json, bound_to_json, dump_json, format_number, read_json_artifact, write_text


@pytest.mark.parametrize(
    "value, text",
    [(2.0, "2"), (110.5, "110.5"), (5.7, "5.7"), (978470.19, "978470.19"), (-3.0, "-3"), (math.inf, "+inf")],
)
def test_format_number(value, text):
    assert format_number(value) == text


def test_bounds_json():
    assert bound_to_json(math.inf) is None
    assert bound_from_json(None, lower=True) == -math.inf
    assert bound_from_json(None, lower=False) == math.inf
    assert bound_from_json(3, lower=True) == 3.0
    with pytest.raises(ValidationError):
        bound_from_json("3", lower=True)
    with pytest.raises(ValidationError):
        bound_from_json(True, lower=True)


def test_dump_json_is_deterministic():
    assert dump_json({"b": 1, "a": [1, 2]}) == '{\n  "a": [\n    1,\n    2\n  ],\n  "b": 1\n}\n'


def test_read_json_artifact_checks_kind(tmp_path, monkeypatch):
    path = tmp_path / "space.json"
    path.write_text(json.dumps({"kind": "space", "features": []}), encoding="utf-8")
    assert read_json_artifact(str(path), "space")["features"] == []
    with pytest.raises(ValidationError, match="expected a dnf artifact"):
        read_json_artifact(str(path), "dnf")

    monkeypatch.setattr("sys.stdin", io.StringIO("{broken"))
    with pytest.raises(ValidationError, match="<stdin>"):
        read_json_artifact("-")


def test_write_text_creates_directories(tmp_path):
    target = tmp_path / "nested" / "out.txt"
    write_text("hello\n", str(target))
    assert target.read_text(encoding="utf-8") == "hello\n"
