import numpy as np
import pytest

from accex.score_model import ScoreMatrix

M3_CSV = """point_id,correct_class,A,B,C
x1,A,0.9,0.5,0.1
x2,B,0.7,0.6,0.2
x3,C,0.3,0.8,0.4
"""


@pytest.fixture
def m3():
    """Three classes, one point each; small enough to check by hand."""
    return ScoreMatrix(
        class_ids=["A", "B", "C"],
        point_ids=["x1", "x2", "x3"],
        correct=[0, 1, 2],
        scores=[[0.9, 0.5, 0.1], [0.7, 0.6, 0.2], [0.3, 0.8, 0.4]],
    )


@pytest.fixture
def m3_path(tmp_path):
    path = tmp_path / "m3.csv"
    path.write_text(M3_CSV)
    return path

