"""
pytest 配置与共享 fixture。

示例程序源码与已知计数见 tests.config。
"""

from __future__ import annotations

import numpy as np
import pytest

from estor.program import Program, parse_program

from tests.config import ASSUME_BLOCKS, R_R_R, R_RR, R_W_W, SEED, STORE_BUFFERING, WRWW_RR


@pytest.fixture(scope="module")
def rww() -> Program:
    """r+w+w：一个读、两个写同一位置。"""
    return parse_program(R_W_W)


@pytest.fixture(scope="module")
def rrr() -> Program:
    return parse_program(R_R_R)


@pytest.fixture(scope="module")
def rrr2() -> Program:
    """r+rr。"""
    return parse_program(R_RR)


@pytest.fixture(scope="module")
def wrww_rr() -> Program:
    return parse_program(WRWW_RR)


@pytest.fixture(scope="module")
def sb() -> Program:
    """store-buffering。"""
    return parse_program(STORE_BUFFERING)


@pytest.fixture(scope="module")
def blocking() -> Program:
    """读到 0 时 assume 失败。"""
    return parse_program(ASSUME_BLOCKS)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(SEED)
