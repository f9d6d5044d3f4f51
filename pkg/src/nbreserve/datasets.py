"""Bundled development triangles used throughout the tests and docs."""

from __future__ import annotations

from .triangle import RunOffTriangle

# Australian motor bodily injury incremental claim counts,
# accident years 1993 to 1999 (a public CASdatasets extract).
AUSTRALIAN_BI_ROWS = [
    [220, 855, 744, 414, 387, 304, 44],
    [320, 1133, 839, 671, 480, 73],
    [400, 1146, 1141, 917, 145],
    [347, 1377, 1343, 185],
    [357, 1914, 299],
    [485, 280],
    [2],
]

# Classic 10x10 paid-amounts development triangle, a standard
# reserving benchmark (total paid to date 34,358,090).
TAYLOR_ASHE_ROWS = [
    [357848, 766940, 610542, 482940, 527326, 574398, 146342, 139950, 227229, 67948],
    [352118, 884021, 933894, 1183289, 445745, 320996, 527804, 266172, 425046],
    [290507, 1001799, 926219, 1016654, 750816, 146923, 495992, 280405],
    [310608, 1108250, 776189, 1562400, 272482, 352053, 206286],
    [443160, 693190, 991983, 769488, 504851, 470639],
    [396132, 937085, 847498, 805037, 705960],
    [440832, 847631, 1131398, 1063269],
    [359480, 1061648, 1443370],
    [376686, 986608],
    [344014],
]


def australian_bodily_injury() -> RunOffTriangle:
    """Australian motor bodily injury claim counts, 7 accident years."""
    return RunOffTriangle.from_rows(AUSTRALIAN_BI_ROWS, origin_label=1993)


def taylor_ashe() -> RunOffTriangle:
    """Benchmark 10x10 paid-amounts triangle (amounts are whole units)."""
    return RunOffTriangle.from_rows(TAYLOR_ASHE_ROWS)
