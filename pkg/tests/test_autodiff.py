"""Engine behavior: tape replay, broadcasting, and gradient certification
of every registered primitive against central differences."""

import numpy as np
import pytest

from provsentry import nn


def make_store(seed=0, shapes=None):
    rng = np.random.default_rng(seed)
    store = nn.ParamStore()
    shapes = shapes or {"w": (3, 4), "b": (1, 4)}
    for name, shape in shapes.items():
        store.add(name, rng.normal(scale=0.7, size=shape))
    return store


def test_tape_records_reverse_order_once():
    store = make_store()
    visited = []
    with nn.Tape() as tape:
        a = nn.relu(store["w"])
        b = nn.mul(a, a)
        loss = nn.sum_all(b)
        for rec in tape.records:
            orig = rec.backward
            rec.backward = (lambda g, r=rec, o=orig: (visited.append(id(r)), o(g))[1])
        tape.backward(loss)
    assert visited == [id(r) for r in reversed(tape.records)]
    assert len(visited) == len(set(visited))


def test_no_recording_outside_tape():
    store = make_store()
    with nn.Tape() as tape:
        nn.relu(store["w"])
        n_inside = len(tape.records)
    nn.relu(store["w"])
    assert n_inside == 1
    assert nn.Tape._active is None


def test_grad_accumulates_across_uses():
    store = nn.ParamStore()
    w = store.add("w", [[2.0]])
    with nn.Tape() as tape:
        loss = nn.sum_all(nn.add(nn.mul(w, w), w))  # w^2 + w
        tape.backward(loss)
    assert w.grad[0, 0] == pytest.approx(2 * 2.0 + 1.0)


def test_backward_requires_scalar():
    store = make_store()
    with nn.Tape() as tape:
        out = nn.relu(store["w"])
        with pytest.raises(nn.ShapeError):
            tape.backward(out)


def test_quadratic_gradient_matches_2w():
    # f = ||W||^2 has analytic gradient 2W
    store = make_store(seed=3)
    w = store["w"]

    def f():
        return nn.sum_all(nn.mul(w, w))

    with nn.Tape() as tape:
        loss = f()
        tape.backward(loss)
    assert np.allclose(w.grad, 2 * w.data)
    rel = nn.finite_diff_check(f, store, h=1e-5)
    assert rel <= 1e-6


def test_finite_diff_rejects_bad_h():
    store = make_store()
    with pytest.raises(ValueError):
        nn.finite_diff_check(lambda: nn.sum_all(store["w"]), store, h=1e-2)


def test_finite_diff_names_offending_param():
    store = nn.ParamStore()
    w = store.add("w_log", [[0.5]])

    def f():
        # log goes non-finite when the perturbed value crosses zero
        out = nn.mul(w, w)
        with np.errstate(invalid="ignore", divide="ignore"):
            data = np.log(out.data - 0.2499999)
        return nn.Tensor(data) if not np.isfinite(data).all() else nn.sum_all(nn.Tensor(data))

    w.data = np.array([[0.5000001]])
    with pytest.raises(FloatingPointError, match="w_log"):
        nn.finite_diff_check(f, store, h=1e-4)


def projected(op, store, *tensors, extra=()):
    """Scalarize an op's output with a fixed random projection."""
    out = op(*tensors, *extra)
    r = nn.constant(np.random.default_rng(4242).normal(size=out.data.shape))
    return nn.sum_all(nn.mul(out, r))


@pytest.mark.parametrize("case", [
    "affine", "matmul", "mul_broadcast", "add_broadcast", "relu", "tanh",
    "sigmoid", "softmax_rows", "layer_norm", "transpose", "reshape",
    "take_rows", "concat_slice", "reverse_time", "mean_all",
])
def test_primitive_gradients(case):
    rng = np.random.default_rng(7)
    store = nn.ParamStore()
    x = store.add("x", rng.normal(size=(4, 5)) + 0.1)
    w = store.add("w", rng.normal(size=(5, 3)))
    b = store.add("b", rng.normal(size=(1, 3)))
    g3 = store.add("g3", rng.normal(size=(2, 15)))

    builders = {
        "affine": lambda: projected(nn.affine, store, x, w, b),
        "matmul": lambda: projected(nn.matmul, store, x, w),
        "mul_broadcast": lambda: projected(nn.mul, store, nn.affine(x, w), b),
        "add_broadcast": lambda: projected(nn.add, store, nn.affine(x, w), b),
        "relu": lambda: projected(nn.relu, store, x),
        "tanh": lambda: projected(nn.tanh, store, x),
        "sigmoid": lambda: projected(nn.sigmoid, store, x),
        "softmax_rows": lambda: projected(nn.softmax_rows, store, x),
        "layer_norm": lambda: projected(
            nn.layer_norm, store, nn.affine(x, w), nn.reshape(b, (1, 3)),
            nn.scale(b, 0.5)),
        "transpose": lambda: projected(nn.transpose, store, x),
        "reshape": lambda: projected(nn.reshape, store, x, extra=((2, 10),)),
        "take_rows": lambda: projected(nn.take_rows, store, x, extra=([2, 0, 2, 3],)),
        "concat_slice": lambda: projected(
            nn.slice_cols, store, nn.concat_cols([x, nn.mul(x, x)]), extra=(2, 8)),
        "reverse_time": lambda: projected(
            nn.reverse_time, store, nn.reshape(g3, (2, 3, 5))),
        "mean_all": lambda: nn.mean_all(nn.mul(x, x)),
    }
    rel = nn.finite_diff_check(builders[case], store, h=1e-5)
    assert rel <= 1e-4, f"{case}: rel err {rel}"


def test_losses_gradients():
    rng = np.random.default_rng(11)
    store = nn.ParamStore()
    z = store.add("z", rng.normal(size=(6, 4)))
    targets = np.eye(4)[rng.integers(0, 4, size=6)]
    weights = np.array([1.0, 2.5, 0.5, 1.5])

    def wce():
        return nn.weighted_cross_entropy(nn.softmax_rows(z), targets, weights)

    def wce_both():
        return nn.weighted_cross_entropy(nn.softmax_rows(z), targets, weights,
                                         weight_negative=True)

    def nll():
        return nn.nll_onehot(nn.softmax_rows(z), targets.argmax(axis=1))

    for f in (wce, wce_both, nll):
        rel = nn.finite_diff_check(f, store, h=1e-5)
        assert rel <= 1e-4, f"{f.__name__}: rel err {rel}"


def test_diag_ssm_scan_gradient():
    rng = np.random.default_rng(5)
    B, T, C, m = 2, 6, 3, 4
    store = nn.ParamStore()
    xf = store.add("xf", rng.normal(size=(B * T, C)))
    a = store.add("a", rng.uniform(-0.9, 0.9, size=(C, m)))
    b = store.add("b", rng.normal(size=(C, m)))
    c = store.add("c", rng.normal(size=(C, m)))
    d = store.add("d", rng.normal(size=(C, 1)))

    def f():
        x3 = nn.reshape(xf, (B, T, C))
        return projected(nn.diag_ssm_scan, store, x3, a, b, c, d)

    rel = nn.finite_diff_check(f, store, h=1e-5)
    assert rel <= 1e-4, f"ssm scan rel err {rel}"


def test_adam_zero_gradient_keeps_params():
    store = make_store(seed=1)
    before = {k: v.data.copy() for k, v in store.items()}
    store.zero_grad()
    nn.adam_step(store, lr=0.1)
    for k, v in store.items():
        assert np.array_equal(v.data, before[k])


def test_adam_single_step_hand_value():
    # p=1, g=1, lr=0.1: mhat=1, vhat=1 -> p = 1 - 0.1/(1+eps) ~ 0.9
    store = nn.ParamStore()
    p = store.add("p", [[1.0]])
    p.grad = np.array([[1.0]])
    nn.adam_step(store, lr=0.1)
    assert p.data[0, 0] == pytest.approx(0.9, abs=1e-7)


def test_adam_deterministic_bitwise():
    def run():
        rng = np.random.default_rng(9)
        store = nn.ParamStore()
        w = store.add("w", rng.normal(size=(3, 3)))
        for _ in range(10):
            store.zero_grad()
            with nn.Tape() as tape:
                loss = nn.sum_all(nn.mul(nn.tanh(w), nn.tanh(w)))
                tape.backward(loss)
            nn.adam_step(store, lr=1e-2)
        return w.data.copy()

    a, b = run(), run()
    assert a.tobytes() == b.tobytes()
