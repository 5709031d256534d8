"""
Dense ReLU networks on a flat parameter vector, with Adam and running input
normalization. Everything is float64.
"""

import numpy as np

from .errors import DimMismatch, NonFiniteGradient


class Mlp:
    """ReLU hidden layers, linear output. Weights W_l have shape (d_out, d_in)."""

    def __init__(self, layer_dims, rng=None, out_scale=1.0, params=None):
        self.layer_dims = [int(d) for d in layer_dims]
        if len(self.layer_dims) < 2:
            raise ValueError("need at least input and output dims")
        self._slices = []
        off = 0
        for din, dout in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            w = slice(off, off + din * dout)
            off += din * dout
            b = slice(off, off + dout)
            off += dout
            self._slices.append((w, b, din, dout))
        self.n_params = off
        if params is not None:
            params = np.asarray(params, dtype=np.float64)
            if params.shape != (self.n_params,):
                raise DimMismatch(f"expected {self.n_params} parameters, got {params.shape}")
            self.params = params.copy()
        else:
            self.params = np.zeros(self.n_params)
            rng = rng if rng is not None else np.random.default_rng(0)
            last = len(self._slices) - 1
            for i, (w, _, din, dout) in enumerate(self._slices):
                lim = np.sqrt(6.0 / (din + dout))
                vals = rng.uniform(-lim, lim, size=din * dout)
                if i == last:
                    vals *= out_scale
                self.params[w] = vals

    @property
    def in_dim(self):
        return self.layer_dims[0]

    @property
    def out_dim(self):
        return self.layer_dims[-1]

    def weights(self, params=None):
        p = self.params if params is None else params
        return [(p[w].reshape(dout, din), p[b]) for w, b, din, dout in self._slices]

    def forward(self, x, params=None):
        """Returns (y, cache). x is (N, d_in) or (d_in,)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        x2 = np.atleast_2d(x)
        if x2.shape[-1] != self.in_dim:
            raise DimMismatch(f"input dim {x2.shape[-1]} != {self.in_dim}")
        hs = [x2]
        zs = []
        layers = self.weights(params)
        h = x2
        for i, (W, b) in enumerate(layers):
            z = h @ W.T + b
            zs.append(z)
            h = z if i == len(layers) - 1 else np.maximum(z, 0.0)
            hs.append(h)
        y = hs[-1]
        cache = (hs, zs, params, single)
        return (y[0] if single else y), cache

    def __call__(self, x, params=None):
        return self.forward(x, params)[0]

    def backward(self, cache, dy):
        """Returns (grad_params, grad_x) for upstream gradient dy."""
        hs, zs, params, single = cache
        dy = np.atleast_2d(np.asarray(dy, dtype=np.float64))
        layers = self.weights(params)
        grad = np.zeros(self.n_params)
        g = dy
        for i in range(len(layers) - 1, -1, -1):
            W, _ = layers[i]
            w, b, _, _ = self._slices[i]
            if i < len(layers) - 1:
                g = g * (zs[i] > 0.0)
            grad[w] = (g.T @ hs[i]).ravel()
            grad[b] = g.sum(axis=0)
            g = g @ W
        return grad, (g[0] if single else g)

    def input_grad_penalty(self, x, params=None):
        """mean_n ||d y_n / d x_n||^2 for a scalar-output net, and its parameter gradient.

        Double backprop through the ReLU net; the ReLU second derivative is 0
        almost everywhere, so biases get zero gradient.
        """
        if self.out_dim != 1:
            raise DimMismatch("gradient penalty needs a scalar output")
        _, cache = self.forward(x, params)
        hs, zs, params, _ = cache
        layers = self.weights(params)
        n = hs[0].shape[0]
        L = len(layers)
        masks = [(z > 0.0).astype(np.float64) for z in zs[:-1]]
        # a[l]: gradient wrt z_l (layer l output pre-activation), c[l]: wrt h_l
        a = [None] * L
        c = [None] * L
        a[L - 1] = np.ones((n, 1))
        for l in range(L - 1, -1, -1):
            W, _ = layers[l]
            c[l] = a[l] @ W  # gradient wrt input of layer l
            if l > 0:
                a[l - 1] = c[l] * masks[l - 1]
        gx = c[0]
        value = float(np.sum(gx * gx) / n)
        grad = np.zeros(self.n_params)
        dc = 2.0 * gx / n
        for l in range(L):
            W, _ = layers[l]
            w, _, _, _ = self._slices[l]
            grad[w] = (a[l].T @ dc).ravel()
            if l < L - 1:
                da = dc @ W.T
                dc = da * masks[l]
        return value, grad, gx

    def state_dict(self, prefix):
        return {prefix + "dims": np.array(self.layer_dims), prefix + "params": self.params.copy()}

    def load_state(self, d, prefix):
        dims = [int(v) for v in d[prefix + "dims"]]
        if dims != self.layer_dims:
            raise DimMismatch(f"{prefix}: checkpoint dims {dims} != {self.layer_dims}")
        p = np.asarray(d[prefix + "params"], dtype=np.float64)
        if p.shape != self.params.shape:
            raise DimMismatch(f"{prefix}: parameter count mismatch")
        self.params = p.copy()


class Adam:
    def __init__(self, n, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params, grads):
        grads = np.asarray(grads, dtype=np.float64)
        if grads.shape != params.shape:
            raise DimMismatch("parameter and gradient lengths differ")
        if not np.all(np.isfinite(grads)):
            raise NonFiniteGradient("non-finite gradient; update skipped")
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grads
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grads * grads
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_dict(self, prefix):
        return {
            prefix + "m": self.m.copy(),
            prefix + "v": self.v.copy(),
            prefix + "t": np.array(self.t),
            prefix + "hyper": np.array([self.lr, self.beta1, self.beta2, self.eps]),
        }

    def load_state(self, d, prefix):
        m = np.asarray(d[prefix + "m"], dtype=np.float64)
        if m.shape != self.m.shape:
            raise DimMismatch(f"{prefix}: optimizer state length mismatch")
        self.m = m.copy()
        self.v = np.asarray(d[prefix + "v"], dtype=np.float64).copy()
        self.t = int(d[prefix + "t"])
        self.lr, self.beta1, self.beta2, self.eps = (float(v) for v in d[prefix + "hyper"])


def adam_step(state: Adam, params, grads):
    return state.step(params, grads)


class RunningNorm:
    """Running mean / population variance with clipping of the normalized output."""

    def __init__(self, dim, clip=5.0, eps=1e-8):
        self.dim = int(dim)
        self.clip = clip
        self.eps = eps
        self.count = 0
        self.mean = np.zeros(self.dim)
        self.m2 = np.zeros(self.dim)  # sum of squared deviations

    @property
    def var(self):
        if self.count == 0:
            return np.ones(self.dim)
        return self.m2 / self.count

    def update(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[-1] != self.dim:
            raise DimMismatch(f"norm dim {x.shape[-1]} != {self.dim}")
        n = x.shape[0]
        if n == 0:
            return
        bmean = x.mean(axis=0)
        bm2 = ((x - bmean) ** 2).sum(axis=0)
        tot = self.count + n
        delta = bmean - self.mean
        self.mean = self.mean + delta * n / tot
        self.m2 = self.m2 + bm2 + delta * delta * self.count * n / tot
        self.count = tot

    def normalize(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise DimMismatch(f"norm dim {x.shape[-1]} != {self.dim}")
        return np.clip((x - self.mean) / np.sqrt(self.var + self.eps), -self.clip, self.clip)

    def apply(self, x, training=True):
        if training:
            self.update(x)
        return self.normalize(x)

    def state_dict(self, prefix):
        return {
            prefix + "count": np.array(self.count),
            prefix + "mean": self.mean.copy(),
            prefix + "m2": self.m2.copy(),
            prefix + "clip": np.array(self.clip),
        }

    def load_state(self, d, prefix):
        mean = np.asarray(d[prefix + "mean"], dtype=np.float64)
        if mean.shape != (self.dim,):
            raise DimMismatch(f"{prefix}: norm dim mismatch")
        self.count = int(d[prefix + "count"])
        self.mean = mean.copy()
        self.m2 = np.asarray(d[prefix + "m2"], dtype=np.float64).copy()
        self.clip = float(d[prefix + "clip"])


def norm_update_apply(rn: RunningNorm, x, training=True):
    return rn.apply(x, training)
