"""Shared fixtures: deterministic gateways and small station factories."""

from pathlib import Path

import pytest

from oscebench.gateway import Gateway, GatewayConfig, MockBackend
from oscebench.models import Criterion, Station

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def gateway() -> Gateway:
    """Default mock gateway with the built-in deterministic synthesizer."""
    return Gateway(GatewayConfig())


@pytest.fixture
def make_gateway():
    """Factory for gateways with a scripted mock backend.

    ``script`` is a list of (match substring, response text) pairs tried in
    order before falling back to the default synthesizer.
    """

    def factory(script=None, synthesizer="default", **config):
        backend = None
        if script is not None or synthesizer != "default":
            kwargs = {"script": script}
            if synthesizer != "default":
                kwargs["synthesizer"] = synthesizer
            backend = MockBackend(**kwargs)
        return Gateway(GatewayConfig(**config), backend=backend)

    return factory


@pytest.fixture
def make_station():
    """Factory for small synthetic stations with configurable dependencies."""

    def factory(n=6, deps=None, station_id="900", strategy="OIAP"):
        deps = deps or {}
        criteria = [
            Criterion(
                id=f"c{i + 1:02d}",
                text=f"Aborde le point numéro {i + 1} de la consultation d'essai",
                dependencies=frozenset(deps.get(f"c{i + 1:02d}", [])),
            )
            for i in range(n)
        ]
        return Station(
            id=station_id,
            doctor_sheet={"situation": "Consultation d'essai."},
            patient_sheet={"contexte": "Vous consultez pour un motif d'essai."},
            criteria=criteria,
            ordering_strategy=strategy,
        )

    return factory
