"""Regenerates the synthetic sample inputs in this directory."""
import datetime as dt
import math
import random

rng = random.Random(2004)


def business_days(start, end):
    d = start
    while d <= end:
        if d.weekday() < 5:
            yield d
        d += dt.timedelta(days=1)


days = list(business_days(dt.date(2004, 1, 1), dt.date(2009, 12, 31)))

# Regime-switching log-price path with mild momentum.
price, drift, prev = 1000.0, 0.0003, 0.0
with open("prices.csv", "w") as f:
    f.write("date,close\n")
    for d in days:
        if rng.random() < 0.01:
            drift = rng.choice([0.0008, 0.0003, -0.0006])
        r = drift + 0.08 * prev + rng.gauss(0.0, 0.011)
        prev = r
        f.write(f"{d.isoformat()},{price:.4f}\n")
        price *= math.exp(r)

# Month-start quotes of an annual rate, as decimal fractions.
rate = 0.02
with open("rf.csv", "w") as f:
    f.write("date,annual_rate\n")
    for d in days:
        if d.day <= 3 and (d == days[0] or d.month != prev_month):
            rate = min(0.06, max(0.001, rate + rng.gauss(0.0, 0.002)))
            f.write(f"{d.isoformat()},{rate:.5f}\n")
        prev_month = d.month

# Daily stress index centred near zero.
level = 0.0
with open("stress.csv", "w") as f:
    f.write("date,stress\n")
    for d in days:
        level = 0.97 * level + rng.gauss(0.0, 0.25)
        f.write(f"{d.isoformat()},{level:.4f}\n")
