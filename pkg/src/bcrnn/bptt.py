"""Dense-weight LSTM/GRU with batched backpropagation through time.

Structured training keeps dense weight matrices and pulls them toward
block-circulant form with a quadratic penalty, so the trainer needs plain
dense forward/backward passes. The cell equations here mirror
`bcrnn.cells` exactly (fused gate layout, peepholes, optional projection,
configurable cell-input activation); a linear readout head on top produces
per-step logits for the synthetic tasks.

Shapes are batch-first: inputs (B, T, X), logits (B, T, O).
"""

import numpy as np

from .cells import sigmoid
from .errors import DimensionMismatchError


def _uniform(rng, shape, scale):
    return rng.uniform(-scale, scale, size=shape)


class DenseLSTM:
    """Projected-peephole LSTM plus linear head, all weights dense.

    params keys: W (4H, X+R) fused gates in i,f,g,o row order; b (4H,);
    wic, wfc, woc (H,); Wp (R, H) when projected; V (O, R); bv (O,).
    """

    cell_kind = "lstm"

    def __init__(self, input_dim, hidden_dim, output_classes, projection_dim=None,
                 gate_activation="sigmoid", rng=None, init_scale=None):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.output_classes = output_classes
        self.projection_dim = projection_dim
        self.gate_activation = gate_activation
        R = self.recurrent_dim
        rng = rng if rng is not None else np.random.default_rng(0)
        scale = init_scale if init_scale is not None else 1.0 / np.sqrt(hidden_dim)
        self.params = {
            "W": _uniform(rng, (4 * hidden_dim, input_dim + R), scale),
            "b": np.zeros(4 * hidden_dim),
            "wic": _uniform(rng, (hidden_dim,), scale),
            "wfc": _uniform(rng, (hidden_dim,), scale),
            "woc": _uniform(rng, (hidden_dim,), scale),
            "V": _uniform(rng, (output_classes, R), scale),
            "bv": np.zeros(output_classes),
        }
        if projection_dim is not None:
            self.params["Wp"] = _uniform(rng, (projection_dim, hidden_dim), scale)

    @property
    def recurrent_dim(self):
        return self.projection_dim if self.projection_dim is not None else self.hidden_dim

    def constrained_matrix_names(self):
        """Weight matrices eligible for the block-circulant constraint."""
        names = ["W"]
        if self.projection_dim is not None:
            names.append("Wp")
        return names

    def forward(self, xs):
        xs = np.asarray(xs, dtype=np.float64)
        B, T, X = xs.shape
        if X != self.input_dim:
            raise DimensionMismatchError(f"inputs have dim {X}, model expects {self.input_dim}")
        p = self.params
        H = self.hidden_dim
        gate = sigmoid if self.gate_activation == "sigmoid" else np.tanh
        c = np.zeros((B, H))
        y = np.zeros((B, self.recurrent_dim))
        logits = np.empty((B, T, self.output_classes))
        cache = []
        for t in range(T):
            u = np.concatenate([xs[:, t], y], axis=1)
            a = u @ p["W"].T + p["b"]
            a_i, a_f, a_g, a_o = np.split(a, 4, axis=1)
            i = sigmoid(a_i + c * p["wic"])
            f = sigmoid(a_f + c * p["wfc"])
            g = gate(a_g)
            c_new = f * c + g * i
            o = sigmoid(a_o + c_new * p["woc"])
            hm = np.tanh(c_new)
            m = o * hm
            y_new = m @ p["Wp"].T if "Wp" in p else m
            logits[:, t] = y_new @ p["V"].T + p["bv"]
            cache.append((u, i, f, g, o, c, c_new, hm, m, y_new))
            c, y = c_new, y_new
        return logits, cache

    def backward(self, cache, dlogits):
        p = self.params
        X = self.input_dim
        B, T, _ = dlogits.shape
        grads = {k: np.zeros_like(v) for k, v in p.items()}
        dy_next = np.zeros((B, self.recurrent_dim))
        dc_next = np.zeros((B, self.hidden_dim))
        for t in reversed(range(T)):
            u, i, f, g, o, c_prev, c, hm, m, y = cache[t]
            dl = dlogits[:, t]
            grads["V"] += dl.T @ y
            grads["bv"] += dl.sum(axis=0)
            dy = dl @ p["V"] + dy_next
            if "Wp" in p:
                grads["Wp"] += dy.T @ m
                dm = dy @ p["Wp"]
            else:
                dm = dy
            do = dm * hm
            dc = dc_next + dm * o * (1.0 - hm * hm)
            dpo = do * o * (1.0 - o)
            grads["woc"] += (dpo * c).sum(axis=0)
            dc = dc + dpo * p["woc"]
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dc_prev = dc * f
            dpi = di * i * (1.0 - i)
            dpf = df * f * (1.0 - f)
            grads["wic"] += (dpi * c_prev).sum(axis=0)
            grads["wfc"] += (dpf * c_prev).sum(axis=0)
            dc_prev = dc_prev + dpi * p["wic"] + dpf * p["wfc"]
            if self.gate_activation == "sigmoid":
                dag = dg * g * (1.0 - g)
            else:
                dag = dg * (1.0 - g * g)
            da = np.concatenate([dpi, dpf, dag, dpo], axis=1)
            grads["W"] += da.T @ u
            grads["b"] += da.sum(axis=0)
            du = da @ p["W"]
            dy_next = du[:, X:]
            dc_next = dc_prev
        return grads


class DenseGRU:
    """GRU plus linear head, all weights dense.

    params keys: W (2H, X+H) fused gates in r,z row order; b (2H,);
    Wcx (H, X); Wcc (H, H); bc (H,); V (O, H); bv (O,).
    """

    cell_kind = "gru"
    gate_activation = "sigmoid"  # fixed by the cell equations
    projection_dim = None

    def __init__(self, input_dim, hidden_dim, output_classes, rng=None, init_scale=None):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.output_classes = output_classes
        rng = rng if rng is not None else np.random.default_rng(0)
        scale = init_scale if init_scale is not None else 1.0 / np.sqrt(hidden_dim)
        self.params = {
            "W": _uniform(rng, (2 * hidden_dim, input_dim + hidden_dim), scale),
            "b": np.zeros(2 * hidden_dim),
            "Wcx": _uniform(rng, (hidden_dim, input_dim), scale),
            "Wcc": _uniform(rng, (hidden_dim, hidden_dim), scale),
            "bc": np.zeros(hidden_dim),
            "V": _uniform(rng, (output_classes, hidden_dim), scale),
            "bv": np.zeros(output_classes),
        }

    @property
    def recurrent_dim(self):
        return self.hidden_dim

    def constrained_matrix_names(self):
        return ["W", "Wcx", "Wcc"]

    def forward(self, xs):
        xs = np.asarray(xs, dtype=np.float64)
        B, T, X = xs.shape
        if X != self.input_dim:
            raise DimensionMismatchError(f"inputs have dim {X}, model expects {self.input_dim}")
        p = self.params
        H = self.hidden_dim
        c = np.zeros((B, H))
        logits = np.empty((B, T, self.output_classes))
        cache = []
        for t in range(T):
            v = np.concatenate([xs[:, t], c], axis=1)
            a = v @ p["W"].T + p["b"]
            a_r, a_z = np.split(a, 2, axis=1)
            r = sigmoid(a_r)
            z = sigmoid(a_z)
            s = r * c
            cand = np.tanh(xs[:, t] @ p["Wcx"].T + s @ p["Wcc"].T + p["bc"])
            c_new = (1.0 - z) * c + z * cand
            logits[:, t] = c_new @ p["V"].T + p["bv"]
            cache.append((xs[:, t], v, r, z, s, cand, c, c_new))
            c = c_new
        return logits, cache

    def backward(self, cache, dlogits):
        p = self.params
        X = self.input_dim
        B, T, _ = dlogits.shape
        grads = {k: np.zeros_like(v) for k, v in p.items()}
        dc_next = np.zeros((B, self.hidden_dim))
        for t in reversed(range(T)):
            x, v, r, z, s, cand, c_prev, c = cache[t]
            dl = dlogits[:, t]
            grads["V"] += dl.T @ c
            grads["bv"] += dl.sum(axis=0)
            dc = dl @ p["V"] + dc_next
            dz = dc * (cand - c_prev)
            dcand = dc * z
            dc_prev = dc * (1.0 - z)
            dac = dcand * (1.0 - cand * cand)
            grads["Wcx"] += dac.T @ x
            grads["Wcc"] += dac.T @ s
            grads["bc"] += dac.sum(axis=0)
            ds = dac @ p["Wcc"]
            dr = ds * c_prev
            dc_prev = dc_prev + ds * r
            dar = dr * r * (1.0 - r)
            daz = dz * z * (1.0 - z)
            da = np.concatenate([dar, daz], axis=1)
            grads["W"] += da.T @ v
            grads["b"] += da.sum(axis=0)
            dv = da @ p["W"]
            dc_prev = dc_prev + dv[:, X:]
            dc_next = dc_prev
        return grads
