"""Model programs, stack addresses, per-execution stores and runtime handles.

A model is an ordinary Python function ``body(h)`` that talks to the
inference algorithm only through the handle ``h``::

    def coin(h):
        x = h.sample(bernoulli(0.5), "x")
        h.factor(0.0 if x else -1.0, "obs")
        return x

Call sites are named explicitly.  ``h.call(site, fn, ...)`` pushes ``site``
onto the address stack for the duration of the call, and every sample and
factor appends its own site label, so repeated dynamic occurrences of a
syntactic site get distinct addresses as long as the caller labels them.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Any, Callable

import numpy as np

from .errors import CtfError, PrefixMismatch, UnregisteredConstruct

Address = tuple


def address_relative(full: Address, base: Address) -> Address:
    """Strip the ``base`` prefix from ``full``."""
    n = len(base)
    if tuple(full[:n]) != tuple(base):
        raise PrefixMismatch(f"{base!r} is not a prefix of {full!r}")
    return tuple(full[n:])


class Kind:
    """Store key kinds (plain ints: they are hashed on every store access)."""

    ERP = 0
    FACTOR = 1


class Store:
    """Per-execution key/value store shared by all level passes of a particle.

    Keys are ``(relative address, level, kind)``.  Rewriting a key with the
    same value is a no-op; rewriting it with a different value means two
    dynamic sites share an address, which is reported as an error.
    """

    __slots__ = ("_data", "level", "base")

    def __init__(self):
        self._data: dict = {}
        self.level = 0
        self.base: Address = ()

    def get(self, rel: Address, level: int, kind: Kind, default=None):
        return self._data.get((rel, level, kind), default)

    def put(self, rel: Address, level: int, kind: Kind, value) -> None:
        key = (rel, level, kind)
        old = self._data.get(key, _MISSING)
        if old is not _MISSING and old != value:
            raise CtfError(f"conflicting store write at {key!r}: {old!r} vs {value!r}")
        self._data[key] = value

    def __len__(self):
        return len(self._data)

    def __contains__(self, key):
        return key in self._data


_MISSING = object()


class ModelProgram:
    """A named model body.

    ``resume(h, state)``, if given, continues an execution from a point where
    the body called ``h.checkpoint(state)`` with an empty call stack: given a
    store restored to its contents at that moment, it must behave exactly
    like the rest of the original execution.  Inference engines use it to
    copy executions without replaying them from the start.
    """

    def __init__(self, body: Callable[["Handle"], Any], name: str | None = None,
                 resume: Callable[["Handle", Any], Any] | None = None):
        self.body = body
        self.name = name or getattr(body, "__name__", "model")
        self.resume = resume

    def __call__(self, h: "Handle"):
        return self.body(h)

    def __repr__(self):
        return f"ModelProgram({self.name})"


def model(fn: Callable[["Handle"], Any]) -> ModelProgram:
    """Decorator turning ``fn(h)`` into a :class:`ModelProgram`."""
    return fn if isinstance(fn, ModelProgram) else ModelProgram(fn)


class Executor:
    """Receives the effects of one execution.

    ``on_sample`` returns the chosen value; ``dist`` may be a Distribution
    or a zero-argument callable producing one, so that replaying executors
    can skip building distributions they will not use.
    """

    def on_sample(self, h: "Handle", dist, addr: Address):
        raise NotImplementedError

    def on_factor(self, h: "Handle", score: float, addr: Address) -> None:
        raise NotImplementedError

    def on_checkpoint(self, h: "Handle", state) -> None:
        pass


class Handle:
    """The effect interface handed to a model body."""

    __slots__ = ("executor", "rng", "store", "_stack", "addresses")

    def __init__(self, executor: Executor, rng: np.random.Generator | None = None,
                 store: Store | None = None, record_addresses: bool = False):
        self.executor = executor
        self.rng = rng if rng is not None else np.random.default_rng()
        self.store = store if store is not None else Store()
        self._stack: list = []
        self.addresses: list | None = [] if record_addresses else None

    def current_address(self) -> Address:
        return tuple(self._stack)

    @contextmanager
    def at(self, site):
        self._stack.append(site)
        try:
            yield
        finally:
            self._stack.pop()

    def call(self, site, fn, *args, **kwargs):
        """Call ``fn(h, *args, **kwargs)`` under call-site label ``site``."""
        self._stack.append(site)
        try:
            return fn(self, *args, **kwargs)
        finally:
            self._stack.pop()

    def _addr(self, site) -> Address:
        addr = tuple(self._stack)
        if site is not None:
            addr = addr + (site,)
        if self.addresses is not None:
            self.addresses.append(addr)
        return addr

    def sample(self, dist, site=None):
        if self.store.level > 0:
            raise UnregisteredConstruct(f"raw sample at {self._addr(site)!r} on level {self.store.level}")
        return self.executor.on_sample(self, dist, self._addr(site))

    def factor(self, score: float, site=None) -> None:
        if self.store.level > 0:
            raise UnregisteredConstruct(f"raw factor at {self._addr(site)!r} on level {self.store.level}")
        self.executor.on_factor(self, float(score), self._addr(site))

    # Entry points for lifted constructs, which are allowed at any level.
    def lifted_sample(self, dist, addr: Address):
        if self.addresses is not None:
            self.addresses.append(addr)
        return self.executor.on_sample(self, dist, addr)

    def lifted_factor(self, score: float, addr: Address) -> None:
        if self.addresses is not None:
            self.addresses.append(addr)
        self.executor.on_factor(self, float(score), addr)

    def checkpoint(self, state) -> None:
        """Declare a resumable point (see :class:`ModelProgram`)."""
        if self._stack:
            raise CtfError("checkpoints are only allowed at the top level of a model")
        self.executor.on_checkpoint(self, state)

    def site_address(self, site) -> Address:
        addr = tuple(self._stack)
        return addr if site is None else addr + (site,)

    def relative_site(self, site, base: Address):
        """``(full address, address relative to base)`` of a site.

        Lifted constructs run inside the model call that recorded ``base``,
        so the stack always starts with it.
        """
        stack = self._stack
        full = tuple(stack) if site is None else (*stack, site)
        return full, full[len(base):]


def resolve(dist):
    """Force a lazily specified distribution."""
    return dist if hasattr(dist, "sample") else dist()
