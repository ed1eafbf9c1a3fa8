"""Geographical threshold graphs, canonical paths and random-walk mixing."""

__version__ = "0.1.0"
