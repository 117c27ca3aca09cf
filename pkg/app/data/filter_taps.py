import math

# Published directional complex framelet parameters (s, c1, eps0, eps1).
TPCTF6_PARAMS = {
    "s": 2,
    "c1": 119 / 128,
    "eps0": 35 / 128,
    "eps1": 81 / 128,
}

# Piecewise-linear and cubic B-spline tight framelets, taps indexed from `start`.
SPLINE_TAPS = {
    "linear": {
        "start": -1,
        "filters": {
            "a": [1 / 4, 2 / 4, 1 / 4],
            "b1": [-math.sqrt(2) / 4, 0.0, math.sqrt(2) / 4],
            "b2": [-1 / 4, 2 / 4, -1 / 4],
        },
    },
    "cubic": {
        "start": -2,
        "filters": {
            "a": [1 / 16, 4 / 16, 6 / 16, 4 / 16, 1 / 16],
            "b1": [1 / 8, 2 / 8, 0.0, -2 / 8, -1 / 8],
            "b2": [
                -math.sqrt(6) / 16,
                0.0,
                2 * math.sqrt(6) / 16,
                0.0,
                -math.sqrt(6) / 16,
            ],
            "b3": [-1 / 8, 2 / 8, 0.0, -2 / 8, 1 / 8],
            "b4": [1 / 16, -4 / 16, 6 / 16, -4 / 16, 1 / 16],
        },
    },
}

DCT_START = 1
DEFAULT_DCT_SIZE = 7


def dct_taps(m: int) -> list[list[float]]:
    """Columns of (1/sqrt(m)) times the orthonormal DCT-II matrix, one tap list per filter."""
    columns = []
    for j in range(1, m + 1):
        weight = 1.0 if j == 1 else math.sqrt(2.0)
        columns.append(
            [
                weight / m * math.cos((j - 1) * (2 * k - 1) * math.pi / (2 * m))
                for k in range(1, m + 1)
            ]
        )
    return columns
