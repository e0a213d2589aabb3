"""Link functions with first and second derivatives of the inverse link."""

import numpy as np

from .errors import InputError

# Keeps logistic means away from {0, 1} so variance denominators stay positive.
_LOGIT_CLAMP = 1e-12


class Link:
    """A link g with inverse mean function mu = g^{-1} and its derivatives.

    Instances are stateless; the three supported kinds are ``identity``,
    ``log`` and ``logit``.
    """

    def __init__(self, kind):
        if kind not in ("identity", "log", "logit"):
            raise InputError(f"unknown link {kind!r}; expected identity, log or logit")
        self.kind = kind

    def __repr__(self):
        return f"Link({self.kind!r})"

    def g(self, mu):
        mu = np.asarray(mu, dtype=float)
        if self.kind == "identity":
            return mu
        if self.kind == "log":
            return np.log(mu)
        mu = np.clip(mu, _LOGIT_CLAMP, 1.0 - _LOGIT_CLAMP)
        return np.log(mu / (1.0 - mu))

    def mean(self, eta):
        """Return (mu, mu', mu'') evaluated elementwise at eta."""
        eta = np.asarray(eta, dtype=float)
        if not np.all(np.isfinite(eta)):
            raise InputError("non-finite linear predictor passed to link")
        if self.kind == "identity":
            one = np.ones_like(eta)
            return eta.copy(), one, np.zeros_like(eta)
        if self.kind == "log":
            mu = np.exp(eta)
            return mu, mu.copy(), mu.copy()
        # logit: mu'' = mu(1-mu)(1-2mu)
        with np.errstate(over="ignore"):
            mu = 1.0 / (1.0 + np.exp(-eta))
        mu = np.clip(mu, _LOGIT_CLAMP, 1.0 - _LOGIT_CLAMP)
        d1 = mu * (1.0 - mu)
        return mu, d1, d1 * (1.0 - 2.0 * mu)


def eval_mean(link, eta):
    """Scalar convenience wrapper: returns the triple (mu, mu', mu'')."""
    mu, d1, d2 = link.mean(np.asarray(float(eta)))
    return float(mu), float(d1), float(d2)
