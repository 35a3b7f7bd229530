"""Editable static simulation grid and published reference values."""

from __future__ import annotations

PARAMETER_NAMES: tuple[str, ...] = ("beta0", "beta1", "rho")

BETA_TRUE: tuple[float, float] = (1.2, 2.5)

CENSOR_MEANS: dict[int, float] = {
    40: 3.64,
    75: 0.59,
}

CENSOR_CAP = 10.0

# Z1 ~ N(0, Z1_SD^2). The published SSE(beta0) values match Var(Z1) = 0.5 rather
# than sd 0.5; Z1_SD_REFERENCE reproduces them.
Z1_SD = 0.5
Z1_SD_REFERENCE = 0.5**0.5

# Relative band for SSE against the published rows and the SEE/SSE window.
REFERENCE_SSE_TOLERANCE = 0.20
SEE_SSE_RATIO_RANGE: tuple[float, float] = (0.85, 1.15)
M_CLUSTERS = 200
CLUSTER_SIZE_RANGE: tuple[int, int] = (5, 7)
RHO_GRID: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9)

SCENARIO_KINDS: dict[str, str] = {
    "table1": "exchangeable",
    "table2": "ar1",
}

# Published (Bias, SEE, SSE) x 10^3 for beta0/beta1, Bias x 10^3 for rho, and
# coverage of the beta intervals, keyed by (scenario, censoring %, rho0).
REFERENCE_ROWS: dict[tuple[str, int, float], dict[str, tuple[float, ...]]] = {
    ("table1", 40, 0.1): {"bias": (-3, -4, 2), "see": (90, 136), "sse": (94, 139), "coverage": (0.94, 0.94)},
    ("table1", 40, 0.3): {"bias": (-0.7, -4, -5), "see": (90, 135), "sse": (92, 133), "coverage": (0.93, 0.95)},
    ("table1", 40, 0.5): {"bias": (5, -3, -5), "see": (89, 135), "sse": (89, 133), "coverage": (0.95, 0.95)},
    ("table1", 40, 0.7): {"bias": (2, 0.2, -3), "see": (87, 133), "sse": (86, 134), "coverage": (0.95, 0.95)},
    ("table1", 40, 0.9): {"bias": (0.6, -3, -4), "see": (84, 130), "sse": (86, 133), "coverage": (0.94, 0.94)},
    ("table1", 75, 0.1): {"bias": (7, -3, 13), "see": (121, 172), "sse": (128, 174), "coverage": (0.93, 0.96)},
    ("table1", 75, 0.3): {"bias": (3, 0.2, -10), "see": (121, 172), "sse": (126, 174), "coverage": (0.95, 0.95)},
    ("table1", 75, 0.5): {"bias": (2, 0.6, -13), "see": (119, 170), "sse": (121, 175), "coverage": (0.94, 0.94)},
    ("table1", 75, 0.7): {"bias": (-2, 2, -8), "see": (119, 170), "sse": (120, 172), "coverage": (0.96, 0.95)},
    ("table1", 75, 0.9): {"bias": (2, 2, -15), "see": (117, 169), "sse": (122, 171), "coverage": (0.94, 0.96)},
    ("table2", 40, 0.1): {"bias": (0.5, -2, 7), "see": (90, 136), "sse": (91, 139), "coverage": (0.95, 0.95)},
    ("table2", 40, 0.3): {"bias": (2, -3, -5), "see": (90, 136), "sse": (90, 138), "coverage": (0.94, 0.94)},
    ("table2", 40, 0.5): {"bias": (-2, -5, -7), "see": (89, 135), "sse": (90, 133), "coverage": (0.94, 0.95)},
    ("table2", 40, 0.7): {"bias": (0.6, -2, -6), "see": (88, 134), "sse": (89, 136), "coverage": (0.94, 0.94)},
    ("table2", 40, 0.9): {"bias": (2, -0.4, -3), "see": (85, 131), "sse": (86, 132), "coverage": (0.96, 0.94)},
    ("table2", 75, 0.1): {"bias": (0.9, 1, 34), "see": (121, 172), "sse": (121, 178), "coverage": (0.95, 0.94)},
    ("table2", 75, 0.3): {"bias": (-3, -2, -12), "see": (120, 172), "sse": (122, 180), "coverage": (0.95, 0.95)},
    ("table2", 75, 0.5): {"bias": (-5, 1, -31), "see": (120, 172), "sse": (121, 175), "coverage": (0.94, 0.94)},
    ("table2", 75, 0.7): {"bias": (-6, -6, -21), "see": (120, 171), "sse": (124, 172), "coverage": (0.94, 0.95)},
    ("table2", 75, 0.9): {"bias": (-1, -2, -10), "see": (118, 170), "sse": (120, 173), "coverage": (0.94, 0.95)},
}

BENCHMARK_GRID: tuple[tuple[str, int, float], ...] = tuple(REFERENCE_ROWS)

# Litter-matched tumour data: exp(beta) with 95% CI and the frailty correlation.
RATS_REFERENCE: dict[str, float | tuple[float, float]] = {
    "exp_beta": 2.56,
    "exp_beta_ci": (1.30, 5.02),
    "rho": 0.75,
}
RATS_TOLERANCE: dict[str, float] = {
    "exp_beta": 0.15,
    "rho": 0.05,
}
RATS_COLUMNS: tuple[str, ...] = ("litter", "rx", "time", "status")
