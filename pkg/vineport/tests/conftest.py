import json
from datetime import date, timedelta

import numpy as np
import pandas as pd
import pytest

from vineport.app.services.vine_service import vine_simulate
from vineport.app.services.vine_structure import build_cvine
from vineport.schemas import BicopSpec, FamilyId, ReturnPanel, VineModel

# One admissible parameter vector per family, away from the box edges
PAIR_PARAMS = {
    FamilyId.INDEPENDENCE: (),
    FamilyId.GAUSSIAN: (0.5,),
    FamilyId.STUDENT: (0.5, 4.0),
    FamilyId.CLAYTON: (1.5,),
    FamilyId.GUMBEL: (1.8,),
    FamilyId.FRANK: (4.0,),
    FamilyId.JOE: (2.0,),
    FamilyId.BB1: (0.5, 1.5),
    FamilyId.BB6: (1.5, 1.5),
    FamilyId.BB7: (1.5, 0.8),
    FamilyId.BB8: (2.0, 0.7),
}


@pytest.fixture(scope='session')
def clayton_cvine():
    """3-dimensional C-vine rooted at variable 0, Clayton(2) in the first tree, independence above"""
    structure = build_cvine([0, 1, 2])
    clayton = BicopSpec(family=FamilyId.CLAYTON, params=(2.0,))
    independence = BicopSpec(family=FamilyId.INDEPENDENCE)
    return VineModel(structure=structure, edge_specs=[[clayton, clayton], [independence]], loglik=0.0)


@pytest.fixture(scope='session')
def clayton_sample(clayton_cvine):
    return vine_simulate(clayton_cvine, 1000, 7)


def business_days(n, start=date(2015, 1, 2)):
    days, current = [], start
    while len(days) < n:
        if current.weekday() < 5:
            days.append(current)
        current += timedelta(days=1)
    return days


@pytest.fixture(scope='session')
def gaussian_panel():
    """600 x 3 percent returns with mild correlation"""
    rng = np.random.default_rng(2024)
    corr = np.array([[1.0, 0.4, 0.2], [0.4, 1.0, 0.3], [0.2, 0.3, 1.0]])
    values = 0.03 + rng.standard_normal((600, 3)) @ np.linalg.cholesky(corr).T
    return ReturnPanel(dates=business_days(600), assets=["A", "B", "C"], values=values)


@pytest.fixture
def write_panel_csv(tmp_path):
    def _write(panel, name="returns.csv"):
        path = tmp_path / name
        frame = pd.DataFrame(panel.values, columns=panel.assets)
        frame.insert(0, "date", [d.isoformat() for d in panel.dates])
        frame.to_csv(path, index=False)
        return str(path)
    return _write


@pytest.fixture
def write_config(tmp_path):
    def _write(**keys):
        keys.setdefault("output_dir", str(tmp_path / "output"))
        path = tmp_path / "run.json"
        path.write_text(json.dumps(keys))
        return str(path)
    return _write
