"""
IDQF Forwarding Simulator - Rewards and State Features
Retransmission features, the RW / RW1 / delay rewards and state-vector
construction from per-face observations.
"""

from typing import NamedTuple, Sequence

import numpy as np


# Reward of RW1 when nothing came back and retransmissions stay under threshold
RW1_IDLE_REWARD = -10000.0


def retx_ratio(r_j: int, r: int) -> float:
    """Share of the epoch's retransmissions whose original transmission used face j."""
    if r_j <= 0:
        return 0.0
    if r <= 0:
        raise ValueError(f"R_j={r_j} with R={r}: retransmission counters are inconsistent")
    return r_j / r


def retx_diff(r: int, n: int) -> int:
    """Retransmitted minus new interests on the chosen face, floored at zero."""
    return max(r - n, 0)


def reward_rw(rtt_samples: Sequence[float], m: int, r: int, c: float) -> float:
    """
    RW = -(mean RTT + C * R), in seconds.

    Args:
        rtt_samples: RTTs (seconds) of data received via the chosen face
        m: Number of those samples
        r: Retransmitted interests forwarded via the chosen face
        c: Penalty per retransmission (seconds)
    """
    if m != len(rtt_samples):
        raise ValueError(f"M={m} but {len(rtt_samples)} RTT samples were given")
    mean_rtt = sum(rtt_samples) / m if m else 0.0
    return -(mean_rtt + c * r)


def reward_rw1(avg_d: float, r: int, n: int, r_lf: int, cm: float, r_thrs: int) -> float:
    """
    RW1: delay reward with a retransmission penalty once R - N exceeds a threshold.

    Args:
        avg_d: Average delay (ms) of data received via the chosen face, 0 if none
        r: Retransmitted interests this epoch
        n: New interests this epoch
        r_lf: Retransmissions originally sent through the chosen face
        cm: Constant multiplier
        r_thrs: Threshold on R - N
    """
    if avg_d < 0:
        raise ValueError(f"average delay must be non-negative, got {avg_d}")
    if r - n > r_thrs:
        if avg_d != 0:
            return -(avg_d + r_lf * cm)
        return -(r_lf * cm)
    if avg_d != 0:
        return -avg_d
    return RW1_IDLE_REWARD


def reward_delay(rtt_samples: Sequence[float]) -> float:
    """Negative mean RTT (seconds) of the chosen face; 0 when nothing was received."""
    if not rtt_samples:
        return 0.0
    return -(sum(rtt_samples) / len(rtt_samples))


class FaceSignals(NamedTuple):
    """Raw per-face observations feeding one block of the state vector."""
    avg_delay_s: float
    satisfaction: float
    retx_ratio: float
    retx_diff: float


def extract_features(
    faces: Sequence[FaceSignals],
    features: Sequence[str],
    delay_cap_s: float = 2.0,
    retx_diff_scale: float = 64.0,
) -> np.ndarray:
    """
    Build the state vector: one block per face in FIB rank order.

    Every component is scaled into [0, 1]; the dimension is
    ``len(faces) * len(features)``.
    """
    values = []
    for face in faces:
        for name in features:
            if name == "avg_delay":
                values.append(min(max(face.avg_delay_s, 0.0), delay_cap_s) / delay_cap_s)
            elif name == "satisfaction_ratio":
                values.append(min(max(face.satisfaction, 0.0), 1.0))
            elif name == "retx_ratio":
                values.append(min(max(face.retx_ratio, 0.0), 1.0))
            elif name == "retx_diff":
                values.append(min(max(face.retx_diff, 0.0) / retx_diff_scale, 1.0))
            else:
                raise ValueError(f"unknown feature: {name}")
    return np.asarray(values, dtype=np.float64)
