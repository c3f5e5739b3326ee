"""Builder for the embedded 33-bus feeder and its microgrid adaptation.

Branch impedances and nominal loads are the canonical Baran-Wu 33-bus
values (ohms, kW, kvar). Everything else here (peak scaling, categories,
customer counts, line lengths, microgrid layout) is this package's own
adaptation; the shipped JSON files are generated from this module.
"""
from __future__ import annotations

import math

from ..network import (DISTRIBUTION, MICROGRID, Battery, Bus, GenerationUnit, Line, Load,
                       RadialNetwork, Switchgear)
from ..stochastic import BatterySpec, calibrate_gamma

BASE_KV = 12.66
BASE_MVA = 10.0

# from, to, R (ohm), X (ohm)
BRANCHES = [
    (1, 2, 0.0922, 0.0470), (2, 3, 0.4930, 0.2511), (3, 4, 0.3660, 0.1864),
    (4, 5, 0.3811, 0.1941), (5, 6, 0.8190, 0.7070), (6, 7, 0.1872, 0.6188),
    (7, 8, 0.7114, 0.2351), (8, 9, 1.0300, 0.7400), (9, 10, 1.0440, 0.7400),
    (10, 11, 0.1966, 0.0650), (11, 12, 0.3744, 0.1238), (12, 13, 1.4680, 1.1550),
    (13, 14, 0.5416, 0.7129), (14, 15, 0.5910, 0.5260), (15, 16, 0.7463, 0.5450),
    (16, 17, 1.2890, 1.7210), (17, 18, 0.7320, 0.5740), (2, 19, 0.1640, 0.1565),
    (19, 20, 1.5042, 1.3554), (20, 21, 0.4095, 0.4784), (21, 22, 0.7089, 0.9373),
    (3, 23, 0.4512, 0.3083), (23, 24, 0.8980, 0.7091), (24, 25, 0.8960, 0.7011),
    (6, 26, 0.2030, 0.1034), (26, 27, 0.2842, 0.1447), (27, 28, 1.0590, 0.9337),
    (28, 29, 0.8042, 0.7006), (29, 30, 0.5075, 0.2585), (30, 31, 0.9744, 0.9630),
    (31, 32, 0.3105, 0.3619), (32, 33, 0.3410, 0.5302),
]

# bus: (kW, kvar)
NOMINAL_LOADS = {
    2: (100, 60), 3: (90, 40), 4: (120, 80), 5: (60, 30), 6: (60, 20), 7: (200, 100),
    8: (200, 100), 9: (60, 20), 10: (60, 20), 11: (45, 30), 12: (60, 35), 13: (60, 35),
    14: (120, 80), 15: (60, 10), 16: (60, 20), 17: (60, 20), 18: (90, 40), 19: (90, 40),
    20: (90, 40), 21: (90, 40), 22: (90, 40), 23: (90, 50), 24: (420, 200), 25: (420, 200),
    26: (60, 25), 27: (60, 25), 28: (60, 20), 29: (120, 70), 30: (200, 600), 31: (150, 70),
    32: (210, 100), 33: (60, 40),
}

CATEGORY_OF = {24: "industry", 25: "industry", 30: "industry",
               7: "trade", 8: "trade", 14: "trade", 29: "trade",
               4: "office", 31: "office", 32: "office",
               **{b: "farm" for b in (15, 16, 17, 18, 19, 20, 21, 22)}}

# typical peak demand per customer (kW), used to derive customer counts
KW_PER_CUSTOMER = {"household": 5.0, "farm": 20.0, "industry": 400.0, "trade": 50.0, "office": 100.0}

PEAK_FACTOR = 2.0
POWER_FACTOR = 0.95
KM_PER_OHM = 2.75
FAILURE_RATE_PER_KM = 0.07
DISTRIBUTION_CAPACITY_MW = 10.0
MICROGRID_CAPACITY_MW = 5.0
SECTIONING_HOURS = 1.0
REPAIR_SHAPE = 2.0
REPAIR_QUANTILE_HOURS = 2.0
REPAIR_QUANTILE_PROB = 0.67

# microgrid: bus, category, peak kW, coordinates
MICROGRID_BUSES = [
    ("M1", None, 0.0, (19.0, 3.0)),
    ("M2", None, 0.0, (20.0, 3.5)),
    ("M3", None, 0.0, (20.0, 2.5)),
    ("M4", "household", 120.0, (19.5, 4.0)),
    ("M5", "household", 80.0, (19.5, 2.0)),
]
# id, from, to, R (ohm), X (ohm), length (km)
MICROGRID_LINES = [
    ("L33", "B33", "M1", 0.10, 0.10, 1.0),
    ("L34", "M1", "M2", 0.05, 0.05, 0.5),
    ("L35", "M1", "M3", 0.05, 0.05, 0.5),
    ("L36", "M1", "M4", 0.05, 0.05, 0.5),
    ("L37", "M1", "M5", 0.05, 0.05, 0.5),
]
WIND_RATED_MW = 2.5
SOLAR_RATED_MW = 1.5


def _coordinates(b: int) -> tuple[float, float]:
    if b <= 18:
        return (float(b - 1), 0.0)
    if b <= 22:
        return (float(b - 18), -1.0)
    if b <= 25:
        return (float(b - 21), 1.0)
    return (float(b - 21), 2.0)


def build_ieee33(microgrid: bool = True) -> RadialNetwork:
    z_base = BASE_KV ** 2 / BASE_MVA
    repair = calibrate_gamma(REPAIR_SHAPE, REPAIR_QUANTILE_HOURS, REPAIR_QUANTILE_PROB)

    buses, loads = [], []
    for b in range(1, 34):
        bid = f"B{b}"
        cat = CATEGORY_OF.get(b, "household")
        n, ref = 0, None
        if b in NOMINAL_LOADS:
            p, q = NOMINAL_LOADS[b]
            peak_kw = PEAK_FACTOR * p
            n = max(1, round(peak_kw / KW_PER_CUSTOMER[cat]))
            ref = f"P{b}"
            loads.append(Load(ref, bid, p / 1000.0, q / 1000.0, peak_kw / 1000.0, POWER_FACTOR))
        buses.append(Bus(bid, _coordinates(b), ref, None, n, cat))

    lines = []
    for k, (a, b, r, x) in enumerate(BRANCHES, start=1):
        lines.append(Line(f"L{k}", f"B{a}", f"B{b}", r / z_base, x / z_base,
                          math.hypot(r, x) * KM_PER_OHM, DISTRIBUTION_CAPACITY_MW,
                          FAILURE_RATE_PER_KM, repair))

    gens, batteries = [], []
    networks = {DISTRIBUTION: tuple(b.id for b in buses)}
    if microgrid:
        for bid, cat, peak_kw, xy in MICROGRID_BUSES:
            ref, gref, n = None, None, 0
            if peak_kw > 0:
                ref = f"P{bid}"
                n = max(1, round(peak_kw / KW_PER_CUSTOMER[cat]))
                loads.append(Load(ref, bid, peak_kw / PEAK_FACTOR / 1000.0,
                                  peak_kw / PEAK_FACTOR / 1000.0 * math.tan(math.acos(POWER_FACTOR)),
                                  peak_kw / 1000.0, POWER_FACTOR))
            if bid == "M2":
                gref = "G_PV"
                gens.append(GenerationUnit(gref, bid, "solar", SOLAR_RATED_MW))
                batteries.append(Battery("BAT1", bid, BatterySpec()))
            if bid == "M3":
                gref = "G_WT"
                gens.append(GenerationUnit(gref, bid, "wind", WIND_RATED_MW))
            buses.append(Bus(bid, xy, ref, gref, n, cat or "household"))
        for lid, a, b, r, x, length in MICROGRID_LINES:
            lines.append(Line(lid, a, b, r / z_base, x / z_base, length, MICROGRID_CAPACITY_MW,
                              FAILURE_RATE_PER_KM, repair))
        networks[MICROGRID] = tuple(m[0] for m in MICROGRID_BUSES)

    switchgear = []
    for ln in lines:
        switchgear.append(Switchgear(f"D{ln.id[1:]}a", "disconnector", ln.id, "from"))
        switchgear.append(Switchgear(f"D{ln.id[1:]}b", "disconnector", ln.id, "to"))
    switchgear.append(Switchgear("CB1", "circuit_breaker", "L1", "from", "closed", SECTIONING_HOURS))
    if microgrid:
        switchgear.append(Switchgear("CBM", "circuit_breaker", "L33", "from", "closed", SECTIONING_HOURS))

    meta = {
        "name": "ieee33_mg" if microgrid else "ieee33",
        "km_per_ohm": KM_PER_OHM,
        "peak_factor": PEAK_FACTOR,
        "note": "Baran-Wu 33-bus impedances and nominal loads; peaks, categories, customers, "
                "lengths and microgrid layout are package-defined adaptations.",
    }
    return RadialNetwork(tuple(buses), tuple(lines), tuple(switchgear), networks, "B1",
                         tuple(loads), tuple(gens), tuple(batteries), BASE_MVA, BASE_KV, meta)
