import pytest

from hedgegame import make_game


@pytest.fixture
def pd():
    return make_game("prisoners_dilemma")


@pytest.fixture
def coordination():
    return make_game("coordination")


@pytest.fixture
def pennies():
    return make_game("matching_pennies")
