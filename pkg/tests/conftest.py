import pytest

from helpers import structured_image

from srkit.kernels import sample_training_kernels
from srkit.pca import fit_pca
from srkit.train import desk_config, train


@pytest.fixture(scope="session")
def desk_corpus():
    return [structured_image(i, 96, 96) for i in range(8)]


@pytest.fixture(scope="session")
def desk_run(desk_corpus):
    """One full desk-preset training run, shared across test modules.
    Takes about two minutes; everything downstream reuses the result."""
    config = desk_config()
    basis = fit_pca(sample_training_kernels(config.scale), config.coeff_dim)
    model, log = train(config, desk_corpus, basis=basis)
    return config, basis, model, log
