from collections import Counter

import pytest

from bergscale.config import list_presets, load_config
from bergscale.experiments import CLAIMS


def test_every_claim_is_covered_once():
    covered = Counter(c for p in list_presets() for c in load_config(p).covers)
    assert set(covered) == set(CLAIMS)
    assert all(n == 1 for n in covered.values()), covered


@pytest.mark.parametrize("path", list_presets(), ids=lambda p: p.stem)
def test_preset_is_well_formed(path):
    cfg = load_config(path)
    assert cfg.name == path.stem
    assert cfg.covers
    if cfg.domain.kind == "model" and cfg.sequence is not None:
        seq = cfg.approach_sequence(cfg.domain.defining_function())
        seq.check_inside()
