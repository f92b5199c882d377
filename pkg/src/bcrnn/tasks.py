"""Built-in synthetic sequence tasks at desk scale.

copy-memory: memorize a few symbols, hold them through a delay, reproduce
them after a recall cue. Cross-entropy over per-step class logits; the
reported metric is recall accuracy (fraction of recall positions decoded
correctly).

adding: two marked values in a value stream must be summed at the last
step. Squared-error loss; the metric is the negative mean squared error so
that higher is better for every task.
"""

import numpy as np

from .errors import DimensionMismatchError


def softmax_cross_entropy(logits, targets, weights):
    """Weighted mean CE over (batch, step); returns (loss, dlogits)."""
    B, T, O = logits.shape
    shifted = logits - logits.max(axis=2, keepdims=True)
    expd = np.exp(shifted)
    probs = expd / expd.sum(axis=2, keepdims=True)
    idx_b, idx_t = np.meshgrid(np.arange(B), np.arange(T), indexing="ij")
    picked = probs[idx_b, idx_t, targets]
    w = np.broadcast_to(weights, (B, T))
    wsum = w.sum()
    loss = -(w * np.log(np.maximum(picked, 1e-300))).sum() / wsum
    dlogits = probs.copy()
    dlogits[idx_b, idx_t, targets] -= 1.0
    dlogits *= (w / wsum)[:, :, None]
    return loss, dlogits


class CopyMemoryTask:
    """Reproduce `n_memorize` symbols after a blank delay and a recall cue.

    Input channels: one-hot symbol (n_symbols), blank marker, recall cue,
    then zero padding up to `input_dim` so the concatenated [x; state]
    splits into whole blocks.
    """

    name = "copy"

    def __init__(self, n_symbols=4, n_memorize=3, delay=4, input_dim=None,
                 recall_weight=1.0, hold_weight=0.2):
        self.n_symbols = n_symbols
        self.n_memorize = n_memorize
        self.delay = delay
        raw = n_symbols + 2
        self.input_dim = raw if input_dim is None else input_dim
        if self.input_dim < raw:
            raise DimensionMismatchError(
                f"input_dim must be at least {raw} for {n_symbols} symbols"
            )
        self.output_classes = n_symbols + 1  # symbols + blank
        self.blank_class = n_symbols
        self.seq_len = n_memorize + delay + 1 + n_memorize
        w = np.full(self.seq_len, hold_weight)
        w[-n_memorize:] = recall_weight
        self.step_weights = w
        self.recall_slice = slice(self.seq_len - n_memorize, self.seq_len)

    def batch(self, rng, batch_size):
        B, T = batch_size, self.seq_len
        M = self.n_memorize
        symbols = rng.integers(0, self.n_symbols, size=(B, M))
        xs = np.zeros((B, T, self.input_dim))
        targets = np.full((B, T), self.blank_class, dtype=np.intp)
        rows = np.arange(B)[:, None]
        xs[rows, np.arange(M)[None, :], symbols] = 1.0
        xs[:, M : M + self.delay, self.n_symbols] = 1.0          # blank marker
        xs[:, M + self.delay, self.n_symbols + 1] = 1.0          # recall cue
        xs[:, M + self.delay + 1 :, self.n_symbols] = 1.0
        targets[:, self.recall_slice] = symbols
        return xs, targets

    def loss_grad(self, logits, targets):
        return softmax_cross_entropy(logits, targets, self.step_weights)

    def metric(self, logits, targets):
        """Recall accuracy in [0, 1]; higher is better."""
        pred = logits[:, self.recall_slice].argmax(axis=2)
        return float((pred == targets[:, self.recall_slice]).mean())


class AddingTask:
    """Sum the two marked values of a value stream, reported at the last step.

    Input channels: value, marker, then zero padding up to `input_dim`.
    """

    name = "adding"

    def __init__(self, seq_len=12, input_dim=None):
        self.seq_len = seq_len
        raw = 2
        self.input_dim = raw if input_dim is None else input_dim
        if self.input_dim < raw:
            raise DimensionMismatchError("input_dim must be at least 2")
        self.output_classes = 1

    def batch(self, rng, batch_size):
        B, T = batch_size, self.seq_len
        xs = np.zeros((B, T, self.input_dim))
        xs[:, :, 0] = rng.uniform(0, 1, size=(B, T))
        first = rng.integers(0, T // 2, size=B)
        second = rng.integers(T // 2, T, size=B)
        rows = np.arange(B)
        xs[rows, first, 1] = 1.0
        xs[rows, second, 1] = 1.0
        targets = xs[rows, first, 0] + xs[rows, second, 0]
        return xs, targets

    def loss_grad(self, logits, targets):
        B, T, _ = logits.shape
        pred = logits[:, -1, 0]
        err = pred - targets
        loss = float((err**2).mean())
        dlogits = np.zeros_like(logits)
        dlogits[:, -1, 0] = 2.0 * err / B
        return loss, dlogits

    def metric(self, logits, targets):
        """Negative MSE; higher is better."""
        err = logits[:, -1, 0] - targets
        return float(-(err**2).mean())


def make_task(name, input_dim=None, **kwargs):
    if name == "copy":
        return CopyMemoryTask(input_dim=input_dim, **kwargs)
    if name == "adding":
        return AddingTask(input_dim=input_dim, **kwargs)
    raise ValueError(f"unknown task {name!r}; choices: copy, adding")
