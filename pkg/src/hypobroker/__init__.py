"""hypobroker: a capability-based service broker that virtualizes named
system services per client according to a dynamic namespace policy."""

__version__ = "0.1.0"
