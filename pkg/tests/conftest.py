import pytest

from flockplan.dataset import GeneratorConfig, generate_corpus


@pytest.fixture(scope="session")
def corpus():
    """Reference 12-flock corpus, shared read-only across suites."""
    return generate_corpus(GeneratorConfig())
