import pytest
from dotenv import load_dotenv

from hhsev.config.settings import defaults, preset_proportions
from hhsev.core.params import IdsParams, MtGlobalRates, MtParams
from hhsev.core.population import HouseholdSizeDistribution


@pytest.fixture(scope="session", autouse=True)
def load_env():
    """Load environment variables for all tests."""
    load_dotenv()


@pytest.fixture(scope="session")
def rho3():
    return HouseholdSizeDistribution(props=preset_proportions("rho3"))


@pytest.fixture(scope="session")
def rho5():
    return HouseholdSizeDistribution(props=preset_proportions("rho5"))


@pytest.fixture(scope="session")
def mt_params():
    ref = defaults.preset("mt_reference")
    return MtParams(lambda_L=ref["lambda_L"], beta_M=ref["beta_M"])


@pytest.fixture(scope="session")
def mt_global():
    return MtGlobalRates(rates=defaults.preset("mt_reference")["global_rates"])


@pytest.fixture(scope="session")
def ids_params():
    return IdsParams(**defaults.preset("ids_reference"))
