import csv

import pytest

from coinn.datamodel import CSV_COLUMNS, ChannelGeometry, ExperimentPoint, FlowCondition, FluidState

# (criterion, passed, detail) lines collected by the acceptance module; passed=None means skipped
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(ACCEPTANCE_RESULTS, key=lambda r: r[0]):
        status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"{status}  {name}: {detail}")


def make_point(x=0.3, exp="E1", g=190.0, d=1.0e-3, rough=1.0e-6, rho_l=550.0, rho_v=15.0,
               mu_l=1.5e-4, mu_v=1.0e-5, sigma=0.01, p=500.0, dpdz=1.0e4, **kw):
    return ExperimentPoint(exp, FluidState(rho_l, rho_v, mu_l, mu_v, sigma, x), ChannelGeometry(d, rough),
                           FlowCondition(g, p), dpdz, **kw)


@pytest.fixture
def point():
    return make_point()


def row_dict(**over):
    row = {
        "experiment_id": "E1", "x": "0.3", "G_kg_sm2": "190", "P_kPa": "500", "ID_mm": "1.0",
        "roughness_um": "1.0", "rho_l": "550", "rho_v": "15", "mu_l": "1.5e-4", "mu_v": "1e-5",
        "sigma": "0.01", "dpdz_Pa_m": "12000",
    }
    row.update({k: str(v) for k, v in over.items()})
    return row


def write_csv(path, rows, header=CSV_COLUMNS):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(header), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)
    return path
