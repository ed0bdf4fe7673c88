"""Smoke test for the optomech Python extension."""

import math

import optomech


def main():
    d = optomech.derive("set1")
    assert abs(d["diagnostics"]["sideband_resolution"] - 15.9) < 1e-9, d["diagnostics"]
    print("derive: E =", round(d["frame"]["e_drive"], 3), "MHz")

    fock1 = [[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]]
    mana = optomech.cv_mana(fock1)
    assert abs(mana - 0.355) < 0.005, mana
    print("mana |1>:", round(mana, 4))

    bell = [[0.0] * 4 for _ in range(4)]
    for i in (0, 3):
        for j in (0, 3):
            bell[i][j] = 0.5
    en = optomech.log_negativity(bell, 2, 2)
    assert abs(en - 1.0) < 1e-9, en
    print("log-negativity Bell:", en)

    p = optomech.Problem("set1", "fock1", dims=3, n_slots=6)
    pops = p.steady_populations()
    assert abs(pops["cavity"][1] - 0.0078) < 0.002, pops
    print("steady cavity p1:", round(pops["cavity"][1], 5))

    u = p.random_initial(seed=3)
    assert len(u) == p.n_slots == 6
    cost, grad = p.cost_and_gradient(u)
    assert math.isfinite(cost) and len(grad) == 6 and len(grad[0]) == 3

    h = 1e-2
    k, j = max(((a, b) for a in range(6) for b in range(3)), key=lambda ab: abs(grad[ab[0]][ab[1]]))
    up = [row[:] for row in u]
    um = [row[:] for row in u]
    up[k][j] += h
    um[k][j] -= h
    fd = (p.cost_and_gradient(up)[0] - p.cost_and_gradient(um)[0]) / (2 * h)
    assert abs(fd - grad[k][j]) <= 1e-4 * abs(fd), (fd, grad[k][j])
    print("gradient vs difference:", grad[k][j], fd)

    ev = p.evaluate(u)
    assert 0.0 <= ev["fidelity"] <= 1.0
    res = p.optimize(restarts=1, seed=1, stage_a_iters=3, stage_b_iters=3)
    assert len(res["fidelities"]) == 1
    print("optimize fidelity:", round(res["best"]["fidelity"], 4))
    warm = optomech.Problem("set1", "fock1", dims=3, n_slots=42)
    res = warm.optimize(restarts=1, seed=1, stage_a_iters=0, stage_b_iters=2, warm_start=0.0)
    assert res["best"]["fidelity"] > 0.45, res["best"]["fidelity"]
    print("warm-start fidelity:", round(res["best"]["fidelity"], 4))
    print("ok")


if __name__ == "__main__":
    main()
