import pytest
from hypothesis import settings

from episurv.fixtures import (
    generate_epi_fixture,
    generate_genomic_fixture,
    load_preset,
)
from episurv.ingest import ingest_gisaid, ingest_sveerv
from episurv.metrics import CaseCounts

settings.register_profile("suite", derandomize=True, max_examples=60)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("fixtures")


@pytest.fixture(scope="session")
def annex_epi_path(fixture_dir):
    path = fixture_dir / "annex_epi.csv"
    generate_epi_fixture(load_preset("annex-epi"), path)
    return path


@pytest.fixture(scope="session")
def annex_gisaid_path(fixture_dir):
    path = fixture_dir / "annex_gisaid.tsv"
    generate_genomic_fixture(load_preset("annex-gisaid"), path)
    return path


@pytest.fixture(scope="session")
def annex_delta_path(fixture_dir):
    path = fixture_dir / "annex_delta.tsv"
    generate_genomic_fixture(load_preset("annex-delta"), path)
    return path


@pytest.fixture(scope="session")
def epi_records(annex_epi_path):
    return list(ingest_sveerv(annex_epi_path).records())


@pytest.fixture(scope="session")
def epi_counts(epi_records):
    counts = CaseCounts()
    for r in epi_records:
        counts.add(r)
    return counts


@pytest.fixture(scope="session")
def gisaid_samples(annex_gisaid_path):
    return list(ingest_gisaid(annex_gisaid_path).records())


@pytest.fixture(scope="session")
def delta_samples(annex_delta_path):
    return list(ingest_gisaid(annex_delta_path).records())
