import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_conv
from ulpvec.kernels import (
    ConvShape,
    RegionError,
    conv2d_int16,
    conv2d_oracle,
    conv2d_ulppack_native,
    conv2d_ulppack_vmacsr,
    max_tensor,
    overflow_monitor,
    random_tensor,
    resolve_budget,
    run_conv,
    worst_case_output,
)
from ulpvec.packing import Precision, QuantTensor
from ulpvec.vmachine import MachineConfig, MachineConfigError, VectorMachine


def qt(arr, bits):
    return QuantTensor.from_array(np.asarray(arr), bits)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(1, 4), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_oracle_matches_brute_force(c, k, extra, seed):
    rng = np.random.default_rng(seed)
    inp = random_tensor(rng, (c, k + extra, k + extra + 1), 3)
    ker = random_tensor(rng, (c, k, k), 3)
    want = brute_conv(inp.as_array().tolist(), ker.as_array().tolist())
    assert conv2d_oracle(inp, ker).tolist() == want


def test_oracle_small_examples():
    ones = qt(np.ones((1, 3, 3), dtype=int), 1)
    assert conv2d_oracle(ones, ones).tolist() == [[9]]
    inp = qt(np.arange(25).reshape(1, 5, 5), 5)
    delta = np.zeros((1, 3, 3), dtype=int)
    delta[0, 1, 1] = 1
    out = conv2d_oracle(inp, qt(delta, 1))
    assert np.array_equal(out, np.arange(25).reshape(5, 5)[1:4, 1:4])


def test_int16_zero_kernel():
    rng = np.random.default_rng(3)
    inp = random_tensor(rng, (4, 8, 8), 4)
    out, _ = conv2d_int16(None, inp, qt(np.zeros((4, 3, 3), dtype=int), 1))
    assert out.shape == (6, 6) and not out.any()


def test_int16_instruction_counts():
    s = ConvShape(4, 10, 12, 3, 3)
    rng = np.random.default_rng(0)
    inp, ker = random_tensor(rng, (4, 10, 12), 2), random_tensor(rng, (4, 3, 3), 2)
    run = run_conv("int16", inp, ker)
    assert run.exact
    ctr = run.counters
    assert ctr.count("vle", "conv") == s.height * s.channels
    assert ctr.count("vse", "conv") == s.out_height
    assert ctr.count("sload", "conv") == s.height * s.channels * s.kw * s.kh
    assert ctr.count("vmacc.vx", "conv") == s.height * s.channels * s.kw * s.kh
    assert ctr.count(phase="pack") == 0


@pytest.mark.parametrize("variant", ["native", "vmacsr"])
def test_packed_instruction_counts(variant):
    s = ConvShape(6, 9, 16, 3, 2)
    rng = np.random.default_rng(1)
    inp, ker = random_tensor(rng, (6, 9, 16), 1), random_tensor(rng, (6, 3, 2), 1)
    run = run_conv(variant, inp, ker, Precision(1, 1), 8)
    assert run.exact
    ctr = run.counters
    pairs = s.channels // 2
    assert ctr.count("vle", "conv") == s.height * pairs
    assert ctr.count("sload", "conv") == s.height * pairs * s.kw * s.kh
    assert ctr.count("vse", "conv") == s.out_height
    # packing: one vmacc per row pair for input and weights
    assert ctr.count("vmacc.vx", "pack") == 2 * pairs
    mac = "vmacsr.vx" if variant == "vmacsr" else "vmacc.vx"
    assert ctr.count(mac, "conv") == s.height * pairs * s.kw * s.kh


def test_fusion_equivalence_native_budget_one():
    rng = np.random.default_rng(5)
    inp, ker = random_tensor(rng, (4, 8, 10), 2), random_tensor(rng, (4, 3, 3), 3)
    p = Precision(2, 3)
    a, _ = conv2d_ulppack_native(None, inp, ker, prec=p, elem_bits=16, budget=1)
    b, _ = conv2d_ulppack_vmacsr(None, inp, ker, prec=p, elem_bits=16)
    assert np.array_equal(a, b)
    assert np.array_equal(a, conv2d_oracle(inp, ker))


def test_native_over_budget_fails_on_all_max():
    # 8 local products at W1A1/E=8 overflow the 4-bit field
    shape = (16, 4, 4)
    inp, ker = max_tensor(shape, 1), max_tensor((16, 1, 1), 1)
    bad = run_conv("native", inp, ker, Precision(1, 1), 8, budget=8)
    assert not bad.modular_match
    good = run_conv("native", inp, ker, Precision(1, 1), 8)
    assert good.budget == 7 and good.exact


def test_native_needs_more_instructions():
    rng = np.random.default_rng(2)
    inp, ker = random_tensor(rng, (8, 8, 8), 1), random_tensor(rng, (8, 3, 3), 1)
    n = run_conv("native", inp, ker, Precision(1, 1), 8)
    v = run_conv("vmacsr", inp, ker, Precision(1, 1), 8)
    assert n.exact and v.exact
    assert n.counters.instructions > v.counters.instructions


def test_region_rejection():
    rng = np.random.default_rng(0)
    inp, ker = random_tensor(rng, (2, 4, 4), 2), random_tensor(rng, (2, 3, 3), 2)
    with pytest.raises(RegionError, match="18 > 15"):
        run_conv("vmacsr", inp, ker, Precision(2, 2), 8)
    with pytest.raises(RegionError):
        conv2d_ulppack_native(None, inp, ker, prec=Precision(2, 2), elem_bits=8)
    assert run_conv("vmacsr", inp, ker, Precision(2, 2), 16).exact


def test_budget_resolution():
    assert resolve_budget(Precision(1, 1), 8) == 7
    assert resolve_budget(Precision(1, 1), 8, policy="paper") == 8
    assert resolve_budget(Precision(1, 1), 8, budget=3) == 3
    with pytest.raises(ValueError):
        resolve_budget(Precision(1, 1), 8, budget=9)


def test_default_shape_e16_two_bit_exact():
    rng = np.random.default_rng(0)
    inp, ker = random_tensor(rng, (32, 64, 64), 2), random_tensor(rng, (32, 7, 7), 2)
    run = run_conv("vmacsr", inp, ker, Precision(2, 2), 16)
    assert run.exact and run.overflow == []


def test_overflow_monitor_examples():
    assert overflow_monitor(np.array([[255, 256]]), 8) == [((0, 1), 256)]
    assert overflow_monitor(np.zeros((2, 2), dtype=np.int64), 8) == []


def test_e8_overflow_is_modular_and_flagged():
    # 64 channels of all-max W1A1 in a 3x3 window: 576 > 255
    inp, ker = max_tensor((64, 4, 4), 1), max_tensor((64, 3, 3), 1)
    run = run_conv("vmacsr", inp, ker, Precision(1, 1), 8)
    assert run.modular_match and not run.exact
    assert len(run.overflow) == 4 and run.overflow[0][1] == 576
    assert worst_case_output(run.shape, Precision(1, 1)) == 576


@pytest.mark.parametrize("variant,prec,e", [("int16", None, 16), ("vmacsr", Precision(2, 2), 16),
                                            ("native", Precision(1, 2), 8)])
def test_column_tiling(variant, prec, e):
    m = VectorMachine(MachineConfig(vlen_bits=128, lanes=1))
    rng = np.random.default_rng(9)
    inp, ker = random_tensor(rng, (4, 6, 37), 1), random_tensor(rng, (4, 3, 3), 2)
    if prec:
        inp = random_tensor(rng, (4, 6, 37), prec.act_bits)
    run = run_conv(variant, inp, ker, prec, e, machine=m)
    assert run.exact
    assert run.counters.count("vse", "conv") > run.shape.out_height


@pytest.mark.parametrize("c", [1, 3, 5])
def test_odd_channels(c):
    rng = np.random.default_rng(c)
    inp, ker = random_tensor(rng, (c, 6, 7), 2), random_tensor(rng, (c, 2, 3), 2)
    for v in ("native", "vmacsr"):
        assert run_conv(v, inp, ker, Precision(2, 2), 16).exact


def test_prepacked_weights_skip_weight_packing():
    rng = np.random.default_rng(4)
    inp, ker = random_tensor(rng, (4, 6, 6), 2), random_tensor(rng, (4, 3, 3), 2)
    a = run_conv("vmacsr", inp, ker, Precision(2, 2), 16)
    b = run_conv("vmacsr", inp, ker, Precision(2, 2), 16, prepacked_weights=True)
    assert np.array_equal(a.output, b.output) and b.exact
    assert b.counters.count(phase="pack") < a.counters.count(phase="pack")
    assert b.counters.count(phase="conv") == a.counters.count(phase="conv")


def test_machine_limits():
    m = VectorMachine(MachineConfig(vlen_bits=64, lanes=1))
    rng = np.random.default_rng(0)
    inp, ker = random_tensor(rng, (1, 8, 8), 1), random_tensor(rng, (1, 1, 5), 1)
    with pytest.raises(MachineConfigError):
        conv2d_int16(m, inp, ker)
    inp, ker = random_tensor(rng, (2, 20, 4), 1), random_tensor(rng, (2, 16, 1), 1)
    with pytest.raises(MachineConfigError):
        run_conv("native", inp, ker, Precision(1, 1), 8)


def test_values_above_precision_rejected():
    inp = qt(np.full((2, 3, 3), 3), 2)
    ker = qt(np.ones((2, 1, 1), dtype=int), 1)
    with pytest.raises(ValueError):
        run_conv("vmacsr", inp, ker, Precision(1, 1), 8)
