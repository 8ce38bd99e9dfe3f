"""Quick check that the extension imports and agrees with known values."""

import math
from pathlib import Path

import detbeam

SCENARIOS = Path(__file__).resolve().parents[2] / "core" / "scenarios"


def close(a, b, tol):
    assert abs(a - b) <= tol, (a, b)


def main():
    iid = detbeam.Scenario.iid(8, 8, 8)
    for rho in (0.1, 1.0, 10.0):
        delta = (-1 + math.sqrt(1 + 4 / rho)) / 2
        sol = detbeam.solve(iid, rho)
        close(sol["g"][0], delta / (1 + delta), 1e-9)
        close(sol["gbar"][0], 1.0, 1e-9)
        close(detbeam.evaluate(iid, rho)["mutual_info"], detbeam.closed_form_mutual_information(rho), 1e-9)

    r = detbeam.jakes_correlation(0.0, math.pi / 2, 4.0, 5)
    assert len(r) == 5 and all(abs(r[i][i] - 1) < 1e-9 for i in range(5))
    close(r[0][1].real, r[1][0].real, 0.0)
    close(r[0][1].imag, -r[1][0].imag, 0.0)

    mac = detbeam.Scenario.from_file(str(SCENARIOS / "table1_mac.json"))
    builtin = detbeam.Scenario.three_user_mac()
    rho = detbeam.rho_from_snr_db(10.0)
    det = detbeam.evaluate(mac, rho)
    close(det["mutual_info"], detbeam.evaluate(builtin, rho)["mutual_info"], 1e-12)
    assert [len(s) for s in det["mmse_sinr"]] == [8, 4, 4]

    wf = detbeam.waterfill(mac, rho, 3.0)
    assert wf["mutual_info"] > det["mutual_info"]
    close(sum(p[0] for p in wf["powers"]), 3.0, 1e-9)

    mc = detbeam.monte_carlo(mac, rho, 200, seed=1)
    assert abs(mc["mean"] - det["mutual_info"]) / det["mutual_info"] < 0.03
    again = detbeam.monte_carlo(mac, rho, 200, seed=1)
    assert again["mean"] == mc["mean"]
    one = detbeam.monte_carlo(mac, rho, 1, metric=("sinr", 0, 0))
    assert one["std"] == 0.0

    ic = detbeam.InterferenceChannel.two_pair(detbeam.rho_from_snr_db(0.0))
    grid = detbeam.stream_search(ic)
    assert grid["best"] == (10, 10) and len(grid["cells"]) == 100
    r1, r2 = detbeam.rate_pair(ic, 10, 10)
    close(r1 + r2, grid["best_value"], 1e-12)
    a, b = detbeam.interference_monte_carlo(ic, 2, 3, 20, seed=4)
    assert a["trials"] == 20 and b["mean"] > 0

    try:
        detbeam.solve(iid, -1.0)
    except detbeam.DetbeamError:
        pass
    else:
        raise AssertionError("negative rho accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
