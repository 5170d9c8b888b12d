import numpy as np
import pytest

from anosovlab.perturbation import BumpProfile, PerturbedMap
from anosovlab.regions import build_region_atlas
from anosovlab.torus import ToralAutomorphism, build_heteroclinic_frame

DEFAULT_MATRIX = [[5, 3], [3, 2]]
DEFAULT_K = 5
DEFAULT_R = 0.25  # 0.05 * k


@pytest.fixture(scope="session")
def L_default():
    return ToralAutomorphism.from_matrix(DEFAULT_MATRIX, k=DEFAULT_K)


@pytest.fixture(scope="session")
def frame_default(L_default):
    return build_heteroclinic_frame(L_default, (0, 0), (1, 2), search_radius=7.5)


@pytest.fixture(scope="session")
def map_default(L_default, frame_default):
    return PerturbedMap(L=L_default, center=frame_default.r_point,
                        profile=BumpProfile(r=DEFAULT_R), t=1.0,
                        frame=frame_default)


@pytest.fixture(scope="session")
def map_smooth(L_default, frame_default):
    return PerturbedMap(L=L_default, center=frame_default.r_point,
                        profile=BumpProfile(r=DEFAULT_R, kind="smooth"), t=1.0,
                        frame=frame_default)


@pytest.fixture(scope="session")
def atlas_default(map_default):
    return build_region_atlas(map_default)


def make_map(L, frame, t=1.0, r=DEFAULT_R, kind="quadratic", alpha=1.0):
    return PerturbedMap(L=L, center=frame.r_point,
                        profile=BumpProfile(r=r, alpha=alpha, kind=kind), t=t,
                        frame=frame)
