"""UTC calendar components of integer epoch-second timestamps."""

import numpy as np


def calendar_components(ts) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(day-of-week, week-of-month, hour-of-day) per timestamp.

    day-of-week: Monday=0..Sunday=6 (epoch second 0 is a Thursday, index 3);
    week-of-month: (day-of-month - 1) // 7, in [0, 5); hour-of-day in [0, 24).
    """
    ts = np.asarray(ts, dtype=np.int64)
    days = ts // 86400
    dow = (days + 3) % 7
    hod = (ts % 86400) // 3600
    d64 = days.astype("datetime64[D]")
    dom = (d64 - d64.astype("datetime64[M]")).astype(np.int64)  # 0-based
    wom = dom // 7
    return dow, wom, hod


def day_of_week(ts: int) -> int:
    return int((int(ts) // 86400 + 3) % 7)
