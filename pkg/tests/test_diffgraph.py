import numpy as np
import pytest

from srnn import diffgraph as dg
from srnn.diffgraph import Parameter, ShapeError, Tape, inject_backward_fault
from srnn.numerics import compare_gradients, finite_difference_gradient


def _check(build, shapes, rng, positive=False, tol=1e-4):
    """Project the primitive output onto a fixed random direction and compare gradients."""
    params = {}
    for k, shape in enumerate(shapes):
        v = rng.uniform(0.5, 2.0, size=shape) if positive else rng.normal(size=shape)
        params[f"p{k}"] = Parameter(f"p{k}", v)
    probe = {}

    def loss(tape):
        out = build(*[tape.param(p) for p in params.values()])
        if "r" not in probe:
            probe["r"] = rng.normal(size=out.value.shape)
        return dg.sum(dg.mul(out, tape.const(probe["r"])))

    tape = Tape()
    analytic = tape.backward(loss(tape))
    numeric = finite_difference_gradient(lambda: float(loss(Tape()).value), params, 1e-4)
    return compare_gradients(analytic, numeric, tol)


PRIMITIVES = {
    "affine": (lambda W, x, b: dg.affine(W, x, b), [(3, 4), (4,), (3,)], False),
    "affine_rows": (lambda W, x, b: dg.affine(W, x, b), [(3, 4), (2, 4), (3,)], False),
    "tanh": (dg.tanh, [(5,)], False),
    "sigmoid": (dg.sigmoid, [(2, 3)], False),
    "elementwise_mul": (dg.elementwise_mul, [(4,), (4,)], False),
    "mul_broadcast": (dg.mul, [(3, 4), (1, 4)], False),
    "add": (dg.add, [(2, 3), (3,)], False),
    "sub": (dg.sub, [(3,), (3,)], False),
    "concat": (lambda a, b: dg.concat([a, b]), [(2, 3), (2, 2)], False),
    "stack": (lambda a, b: dg.stack([a, b]), [(3,), (3,)], False),
    "lookup": (lambda t: dg.lookup(t, np.array([0, 2, 0])), [(3, 2)], False),
    "take_slice": (lambda a: a[1:3], [(4, 2)], False),
    "dot": (dg.dot, [(5,), (5,)], False),
    "matmul": (dg.matmul, [(2, 3), (3, 2)], False),
    "log_sum_exp_node": (lambda x: dg.log_sum_exp_node(x, axis=1), [(2, 4)], False),
    "log_sum_exp_scalars": (lambda a, b: dg.log_sum_exp_node([a[0], b[0]]), [(1,), (1,)], False),
    "log_softmax": (dg.log_softmax, [(2, 4)], False),
    "exp": (dg.exp, [(3,)], False),
    "log": (dg.log, [(3,)], True),
    "scale": (lambda a: dg.scale(a, -2.5), [(3,)], False),
    "add_scalar": (lambda a: dg.add_scalar(a, 4.0), [(3,)], False),
    "reshape": (lambda a: dg.reshape(a, (3, 2)), [(6,)], False),
    "transpose": (dg.transpose, [(2, 3)], False),
    "sum_axis": (lambda a: dg.sum(a, axis=0), [(3, 2)], False),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradient_ten_instances(name):
    build, shapes, positive = PRIMITIVES[name]
    rng = np.random.default_rng(hash(name) % 2**32)
    for _ in range(10):
        report = _check(build, shapes, rng, positive)
        assert report.max_rel_error < 1e-4, (name, report.failures)


def test_tanh_zero():
    t = Tape()
    assert np.array_equal(dg.tanh(t.const(np.zeros(4))).value, np.zeros(4))


def test_affine_identity():
    t = Tape()
    x = np.array([1.5, -2.0, 0.25])
    assert np.array_equal(dg.affine(t.const(np.eye(3)), t.const(x), t.const(np.zeros(3))).value, x)


def test_dot_gradient_is_other_vector(rng):
    w, x = Parameter("w", rng.normal(size=5)), Parameter("x", rng.normal(size=5))
    t = Tape()
    g = t.backward(dg.dot(t.param(w), t.param(x)))
    assert np.allclose(g["w"], x.value, rtol=0, atol=0)
    numeric = finite_difference_gradient(lambda: float(w.value @ x.value), {"w": w, "x": x}, 1e-4)
    assert compare_gradients(g, numeric, 1e-6).max_rel_error < 1e-6


def test_backward_single_parameter():
    p = Parameter("p", np.array(2.0))
    t = Tape()
    assert t.backward(t.param(p))["p"] == 1.0


def test_lse_gradient_equals_softmax(rng):
    for _ in range(10):
        v = rng.normal(scale=5, size=7)
        p = Parameter("v", v)
        t = Tape()
        g = t.backward(dg.log_sum_exp_node(t.param(p)))["v"]
        soft = np.exp(v - v.max()) / np.exp(v - v.max()).sum()
        assert np.max(np.abs(g - soft)) < 1e-10


def test_lse_gradient_with_neg_inf_entries():
    p = Parameter("v", np.array([0.0, -np.inf, 0.0]))
    t = Tape()
    g = t.backward(dg.log_sum_exp_node(t.param(p)))["v"]
    assert np.array_equal(g, [0.5, 0.0, 0.5])


def test_non_scalar_root_rejected():
    p = Parameter("p", np.ones(3))
    t = Tape()
    with pytest.raises(ValueError):
        t.backward(dg.tanh(t.param(p)))


@pytest.mark.parametrize(
    "make",
    [
        lambda t: dg.affine(t.const(np.ones((2, 3))), t.const(np.ones(4))),
        lambda t: dg.dot(t.const(np.ones(3)), t.const(np.ones(4))),
        lambda t: dg.concat([t.const(np.ones((2, 2))), t.const(np.ones((3, 3)))]),
        lambda t: dg.matmul(t.const(np.ones((2, 3))), t.const(np.ones((2, 3)))),
        lambda t: dg.lookup(t.const(np.ones(3)), 0),
    ],
)
def test_shape_errors_name_the_primitive(make):
    with pytest.raises(ShapeError) as exc:
        make(Tape())
    assert ":" in str(exc.value)


def test_topological_order():
    p = Parameter("p", np.ones(2))
    t = Tape()
    out = dg.sum(dg.tanh(dg.mul(t.param(p), t.param(p))))
    assert all(par.index < node.index for node in t.nodes for par in node.parents)
    assert out.index == len(t.nodes) - 1


def test_repeated_parameter_use_accumulates():
    p = Parameter("p", np.array([3.0]))
    t = Tape()
    g = t.backward(dg.sum(dg.mul(t.param(p), t.param(p))))
    assert g["p"][0] == pytest.approx(6.0)


def test_backward_deterministic(rng):
    W = Parameter("W", rng.normal(size=(4, 3)))
    x = rng.normal(size=(5, 3))

    def run():
        t = Tape()
        h = dg.tanh(dg.affine(t.param(W), t.const(x)))
        return t.backward(dg.log_sum_exp_node(dg.reshape(h, (20,))))["W"]

    assert np.array_equal(run(), run())


def test_fault_injection_breaks_gradient(rng):
    build, shapes, _ = PRIMITIVES["tanh"]
    with inject_backward_fault("tanh"):
        report = _check(build, shapes, rng)
    assert not report.passed
    assert _check(build, shapes, rng).passed
