"""Synthetic NSL-KDD-shaped traffic for tests and demos.

DoS rows draw their traffic features (``count``, ``srv_count`` and the SYN
error rates) from a high-mean regime and normal rows from a low-mean one, so
the two classes are separable by a linear rule on ``count`` and
``serror_rate``. Records are emitted in alternating runs of one class, which
gives the sliding windows some temporal structure.
"""

from __future__ import annotations

import numpy as np

from .nslkdd import NUMERIC_NAMES, RawRecord

# (label, protocol, services, flags)
_DOS_PROFILES = (
    ("neptune", "tcp", ("private", "http", "telnet"), ("S0", "REJ")),
    ("smurf", "icmp", ("ecr_i",), ("SF",)),
    ("back", "tcp", ("http",), ("RSTR", "SF")),
    ("teardrop", "udp", ("private",), ("SF",)),
    ("pod", "icmp", ("ecr_i", "tim_i"), ("SF",)),
    ("land", "tcp", ("finger", "private"), ("S0",)),
)
_NORMAL_PROFILES = (
    ("tcp", ("http", "smtp", "ftp_data", "ftp"), ("SF",)),
    ("udp", ("domain_u", "private", "ntp_u"), ("SF",)),
    ("icmp", ("eco_i", "ecr_i"), ("SF",)),
)
_NORMAL_PROTOCOL_P = (0.7, 0.2, 0.1)

DESIGNATED_FEATURES = ("count", "serror_rate")


def _numeric(rng: np.random.Generator, dos: bool, profile: str) -> tuple[float, ...]:
    v = dict.fromkeys(NUMERIC_NAMES, 0.0)
    if dos:
        count = rng.normal(320.0, 70.0)
        serror = rng.uniform(0.6, 1.0) if profile in ("neptune", "land") else rng.uniform(0.35, 0.7)
        v["duration"] = 0.0
        v["src_bytes"] = float(rng.integers(0, 1500))
        v["wrong_fragment"] = float(profile in ("teardrop", "pod")) * float(rng.integers(1, 3))
        v["land"] = float(profile == "land")
        v["same_srv_rate"] = rng.uniform(0.0, 0.3)
        v["diff_srv_rate"] = rng.uniform(0.05, 0.2)
        v["dst_host_count"] = 255.0
        v["dst_host_srv_count"] = float(rng.integers(1, 30))
    else:
        count = rng.normal(25.0, 18.0)
        serror = rng.uniform(0.0, 0.15)
        v["duration"] = float(rng.exponential(40.0))
        v["src_bytes"] = float(rng.integers(100, 5000))
        v["dst_bytes"] = float(rng.integers(0, 20000))
        v["logged_in"] = float(rng.random() < 0.7)
        v["same_srv_rate"] = rng.uniform(0.7, 1.0)
        v["diff_srv_rate"] = rng.uniform(0.0, 0.1)
        v["dst_host_count"] = float(rng.integers(1, 255))
        v["dst_host_srv_count"] = float(rng.integers(50, 255))
    v["count"] = float(max(1, round(count)))
    v["srv_count"] = float(max(1, round(v["count"] * rng.uniform(0.05, 0.3 if dos else 1.0))))
    v["serror_rate"] = round(serror, 2)
    v["srv_serror_rate"] = round(min(1.0, max(0.0, serror + rng.normal(0, 0.05))), 2)
    v["dst_host_serror_rate"] = round(min(1.0, max(0.0, serror + rng.normal(0, 0.05))), 2)
    v["rerror_rate"] = round(rng.uniform(0.0, 0.1), 2)
    v["dst_host_same_srv_rate"] = round(rng.uniform(0.0, 0.2) if dos else rng.uniform(0.6, 1.0), 2)
    for key in ("same_srv_rate", "diff_srv_rate"):
        v[key] = round(v[key], 2)
    return tuple(v[name] for name in NUMERIC_NAMES)


def synth_generate(n: int, dos_fraction: float = 0.5, seed: int = 0, mean_run: float = 6.0) -> list[RawRecord]:
    """``n`` records, ``round(n * dos_fraction)`` of them DoS, in class runs."""
    if not 0.0 <= dos_fraction <= 1.0:
        raise ValueError(f"dos_fraction must be in [0, 1], got {dos_fraction}")
    rng = np.random.default_rng(seed)
    remaining = {1: int(round(n * dos_fraction)), 0: n - int(round(n * dos_fraction))}
    records: list[RawRecord] = []
    current = int(rng.random() < dos_fraction)
    while remaining[0] + remaining[1] > 0:
        if remaining[current] == 0:
            current = 1 - current
        run = min(remaining[current], int(rng.geometric(1.0 / mean_run)))
        remaining[current] -= run
        if current == 1:
            label, proto, services, flags = _DOS_PROFILES[rng.integers(len(_DOS_PROFILES))]
        else:
            label = "normal"
            proto, services, flags = _NORMAL_PROFILES[rng.choice(3, p=_NORMAL_PROTOCOL_P)]
        for _ in range(run):
            records.append(RawRecord(
                numeric=_numeric(rng, current == 1, label),
                protocol_type=proto,
                service=str(rng.choice(services)),
                flag=str(rng.choice(flags)),
                label=label,
                difficulty=int(rng.integers(10, 22)),
            ))
        current = 1 - current
    return records
