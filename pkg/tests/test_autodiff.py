import math

import numpy as np
import pytest

from deephedge import autodiff as ad
from deephedge.nn import MlpParams, mlp_forward, mlp_init


def grad_wrt(fn, *xs):
    tape = ad.Tape()
    leaves = [tape.leaf(x) for x in xs]
    out = fn(*leaves)
    adj = ad.backward(tape, out)
    return out.value, [adj[l.idx] for l in leaves], tape


def test_identity_gradient():
    _, (g,), _ = grad_wrt(lambda x: x, 3.0)
    assert g == 1.0


def test_abs_subgradient_at_zero():
    _, (g,), _ = grad_wrt(ad.absolute, 0.0)
    assert g == 0.0


def test_relu_and_maximum_at_kink():
    assert grad_wrt(ad.relu, 0.0)[1][0] == 0.0
    assert grad_wrt(lambda x: ad.maximum(x, 2.0), 2.0)[1][0] == 0.0


def test_minimum_ties_go_left():
    _, (ga, gb), _ = grad_wrt(ad.minimum, 1.0, 1.0)
    assert (ga, gb) == (1.0, 0.0)


def test_power_below_one_at_zero_is_finite():
    _, (g,), _ = grad_wrt(lambda x: ad.power(x, 0.5), 0.0)
    assert g == 0.0


def test_non_scalar_output_rejected():
    tape = ad.Tape()
    x = tape.leaf(1.0)
    with pytest.raises(TypeError):
        ad.backward(tape, [x, x])
    with pytest.raises(ValueError):
        ad.backward(ad.Tape(), x)


def test_tape_is_topological_and_backward_is_linear():
    tape = ad.Tape()
    x = tape.leaf(0.7)
    y = x
    for _ in range(50):
        y = ad.exp(y * 0.1) + y * x
    for i, parents in enumerate(tape.parents):
        assert all(p < i for p in parents)
    ad.backward(tape, y)
    assert tape.last_backward_visits == len(tape)


# Random composite functions: each op appends one value computed from earlier
# ones.  ``signature`` records every branch decision so finite differences
# can be restricted to points where no kink is crossed.

UNARY = ["exp", "log1sq", "relu", "abs", "maxc", "ncdf", "neg", "sq"]
BINARY = ["add", "sub", "mul", "div", "min"]


def make_program(rng, n_inputs=3, n_ops=8):
    prog = []
    for j in range(n_ops):
        avail = n_inputs + j
        if rng.random() < 0.5:
            prog.append((rng.choice(UNARY), int(rng.integers(avail)), None, float(rng.uniform(-1, 1))))
        else:
            prog.append((rng.choice(BINARY), int(rng.integers(avail)), int(rng.integers(avail)), 0.0))
    return prog


def run_program(prog, xs, on_tape):
    if on_tape:
        E = dict(exp=ad.exp, log=ad.log, relu=ad.relu, abs=ad.absolute, ncdf=ad.ncdf,
                 maxc=ad.maximum, min=ad.minimum)
    else:
        E = dict(exp=math.exp, log=math.log, relu=lambda a: max(a, 0.0), abs=abs,
                 ncdf=lambda a: 0.5 * math.erfc(-a / math.sqrt(2)), maxc=max, min=min)
    val = lambda v: v.value if on_tape else v
    vals = list(xs)
    sig = []
    for op, i, j, c in prog:
        a = vals[i]
        b = vals[j] if j is not None else None
        if op == "exp":
            r = E["exp"](a * 0.3)
        elif op == "log1sq":
            r = E["log"](a * a + 1.0)
        elif op == "relu":
            sig.append(val(a) > 0)
            r = E["relu"](a)
        elif op == "abs":
            sig.append(val(a) > 0)
            r = E["abs"](a)
        elif op == "maxc":
            sig.append(val(a) > c)
            r = E["maxc"](a, c)
        elif op == "ncdf":
            r = E["ncdf"](a)
        elif op == "neg":
            r = -a
        elif op == "sq":
            r = a * a
        elif op == "add":
            r = a + b
        elif op == "sub":
            r = a - b
        elif op == "mul":
            r = a * b
        elif op == "div":
            r = a / (b * b + 1.0)
        elif op == "min":
            sig.append(val(b) < val(a))
            r = E["min"](a, b)
        vals.append(r)
    return vals[-1], tuple(sig)


def test_random_composites_match_finite_differences():
    rng = np.random.default_rng(5)
    checked = 0
    while checked < 100:
        prog = make_program(rng)
        x = rng.uniform(-1.5, 1.5, 3)
        tape = ad.Tape()
        leaves = [tape.leaf(v) for v in x]
        out, sig = run_program(prog, leaves, True)
        if not isinstance(out, ad.Var) or out.tape is not tape:
            continue
        adj = ad.backward(tape, out)
        assert np.all(np.isfinite(adj))
        f0, sig0 = run_program(prog, list(x), False)
        assert f0 == pytest.approx(out.value, rel=1e-15, abs=1e-300)
        ok = True
        fd = np.empty(3)
        for k in range(3):
            h = 1e-6 * max(1.0, abs(x[k]))
            xp, xm = x.copy(), x.copy()
            xp[k] += h
            xm[k] -= h
            fp, sp = run_program(prog, list(xp), False)
            fm, sm = run_program(prog, list(xm), False)
            # stay away from kinks: no branch may flip within 100 h
            xp2, xm2 = x.copy(), x.copy()
            xp2[k] += 100 * h
            xm2[k] -= 100 * h
            if sp != sig0 or sm != sig0 or run_program(prog, list(xp2), False)[1] != sig0 \
                    or run_program(prog, list(xm2), False)[1] != sig0:
                ok = False
                break
            fd[k] = (fp - fm) / (2 * h)
        if not ok:
            continue
        g = np.array([adj[l.idx] for l in leaves])
        denom = np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-3)
        assert np.all(np.abs(g - fd) / denom <= 1e-6), (prog, x, g, fd)
        checked += 1


def test_kink_inputs_give_finite_gradients():
    tape = ad.Tape()
    x = tape.leaf(0.0)
    y = ad.absolute(x) + ad.relu(x) + ad.minimum(x, 0.0) + ad.maximum(x, 0.0) + ad.power(ad.relu(x), 0.3)
    adj = ad.backward(tape, y)
    assert np.all(np.isfinite(adj))


def test_zero_network_outputs_bias():
    params = mlp_init(seed=1)
    for w in params.weights:
        w[...] = 0.0
    params.biases[-1][...] = 0.37
    for x in (-2.0, 0.0, 5.0):
        assert mlp_forward(params, x, ad.Tape()).value == 0.37


def test_dead_relu_path_outputs_last_bias():
    params = mlp_init(seed=2)
    params.weights[0][...] = 1.0
    params.biases[0][...] = -10.0  # first layer pre-activations negative for x < 10
    params.biases[-1][...] = -0.25
    assert mlp_forward(params, 0.3, ad.Tape()).value == -0.25


def straight_line_mlp(params: MlpParams, x: float) -> float:
    h = [x]
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        out = []
        for j in range(w.shape[0]):
            s = math.fsum([w[j, i] * h[i] for i in range(w.shape[1])] + [b[j]])
            out.append(s if l == len(params.weights) - 1 else max(s, 0.0))
        h = out
    return h[0]


def test_mlp_forward_matches_straight_line():
    params = mlp_init(seed=3)
    rng = np.random.default_rng(0)
    for b in params.biases:
        b[...] = rng.normal(0, 0.3, b.shape)
    out = mlp_forward(params, 0.3, ad.Tape()).value
    assert out == pytest.approx(straight_line_mlp(params, 0.3), abs=1e-14)


def test_mlp_forward_rejects_non_finite():
    with pytest.raises(ValueError):
        mlp_forward(mlp_init(seed=0), float("nan"), ad.Tape())


def test_mlp_gradient_matches_finite_differences():
    params = mlp_init(seed=4)
    rng = np.random.default_rng(1)
    for b in params.biases:
        b[...] = rng.normal(0, 0.3, b.shape)
    tape = ad.Tape()
    out = mlp_forward(params, 0.8, tape)
    adj = ad.backward(tape, out)
    for l, w in enumerate(params.weights):
        g = tape.grad_of(w, adj)
        for _ in range(5):
            idx = tuple(rng.integers(s) for s in w.shape)
            old = w[idx]
            h = 1e-6
            w[idx] = old + h
            fp = straight_line_mlp(params, 0.8)
            w[idx] = old - h
            fm = straight_line_mlp(params, 0.8)
            w[idx] = old
            assert g[idx] == pytest.approx((fp - fm) / (2 * h), rel=1e-6, abs=1e-9)
