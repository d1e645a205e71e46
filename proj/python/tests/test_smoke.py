import numpy as np
import pytest

import layer_ensemble as le


def test_dataset_shapes_and_labels():
    d = le.make_dataset(30, 12, 42)
    x, y = d.train(1)
    assert x.shape == (30, 4)
    assert sorted(set(y.tolist())) == [0, 1, 2]
    x2, _ = d.train(2)
    assert np.allclose(x2[:, 0] + x2[:, 2], 3.0)


def test_classify_point():
    assert le.classify_point(0.25, 0.5) == 2
    assert le.classify_point(0.0, 0.0) is None


def test_forward_sums_to_one():
    net = le.init_network(1)
    p = net.forward([0.2, 0.8, 0.8, 0.2])
    assert len(p) == 3
    assert abs(sum(p) - 1.0) < 1e-12
    with pytest.raises(ValueError):
        net.forward([1.0, 2.0])


def test_ideal_chip_matches_software():
    d = le.make_dataset(50, 50, 3)
    sol = le.score_solution(le.ternarize(le.init_network(5)), d)
    chip = le.SimChip(le.NoiseConfig.ideal(), True)
    net = le.deploy(chip, sol, beta=2)
    assert net.all_successful()
    assert net.devices == 2 * 276
    assert net.g_diff == [100.0, 100.0, 100.0]
    acc = le.evaluate_ensemble(chip, net, d)
    assert acc == pytest.approx(tuple(sol.accuracy), abs=0)


def test_kernel_vmm_single_device():
    chip = le.SimChip(le.NoiseConfig.ideal(), True)
    ok, iters, _ = chip.program_device(0, 0, 0, 233.0)
    assert ok and iters == 1
    v = [0.0] * 25
    v[0] = 0.3
    i = chip.kernel_vmm(0, v)
    assert i[0] == pytest.approx(69.9, abs=1e-12)


def test_fault_injection_counts():
    chip = le.SimChip()
    assert chip.inject_faults(0.2, "StuckHigh", 1) == 125 * 32
    with pytest.raises(ValueError):
        chip.inject_faults(0.2, "Melted", 1)
