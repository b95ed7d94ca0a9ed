import pytest

from rainbowloc.config import ExperimentConfig


@pytest.fixture(scope="session")
def tiny_config():
    """Small grid/array so dataset and training tests stay fast."""
    return ExperimentConfig(
        scene_id="los",
        num_subcarriers=32,
        delta_f_hz=380.16e6 / 32,
        num_elements=8,
    )


@pytest.fixture(scope="session")
def tiny_dataset(tiny_config, tmp_path_factory):
    from rainbowloc.dataset import generate_dataset, load_dataset

    out = tmp_path_factory.mktemp("data") / "tiny"
    generate_dataset("los", 50, tiny_config, master_seed=77, out_dir=out)
    return load_dataset(out)
