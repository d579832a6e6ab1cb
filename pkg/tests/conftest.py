import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

import pytest

from stlm import tokenizer as tok
from stlm.fixtures import build_scripted_model

ACTION_REPLY = (
    "<call>John<call> <search>Highest building in the world<search> "
    "<calendar>2023-05-20T09:15:30/Review<calendar>"
)


@pytest.fixture(scope="session")
def vocab():
    return tok.build_vocab()


@pytest.fixture(scope="session")
def hello_model(vocab):
    weights, config = build_scripted_model("Hello", vocab)
    return weights, config


@pytest.fixture(scope="session")
def action_model(vocab):
    weights, config = build_scripted_model(ACTION_REPLY, vocab)
    return weights, config
