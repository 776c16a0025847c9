import numpy as np
import pytest

from cspkit import classifier as cl
from cspkit import sigmodel as sm


def make_record(scheme="bpsk", T0=8.0, beta=0.35, f0=0.0, snr=None,
                n=32768, seed=1, amplitude=1.0, phase=0.0):
    common = dict(cfo=f0, symbol_period=T0, rolloff=beta, phase=phase,
                  num_samples=n, seed=seed)
    if snr is None:
        params = sm.SignalParams(scheme=sm.ModulationScheme(scheme),
                                 amplitude=amplitude, inband_snr=None,
                                 **common)
    else:
        # amplitude follows from the in-band SNR relation
        params = sm.SignalParams.from_snr(sm.ModulationScheme(scheme),
                                          inband_snr=snr, **common)
    return sm.synthesize(params)


@pytest.fixture(scope="session")
def template_library():
    return cl.build_templates(beta_grid=(0.2, 0.35, 0.5, 1.0))


# one-line verdicts collected by the end-to-end acceptance tests, echoed
# after the run so they are visible even when pytest captures stdout
ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def noise_record():
    rng = np.random.default_rng(77)
    return (rng.standard_normal(32768) + 1j * rng.standard_normal(32768)) \
        * np.sqrt(0.5)
