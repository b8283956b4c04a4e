"""mplsim — deterministic discrete-event simulator comparing MPLS label
switching with classic IP longest-prefix routing, with a DiffServ QoS engine
and a VPN tunnel overhead model."""

__version__ = "0.1.0"
