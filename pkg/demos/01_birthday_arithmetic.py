"""Birthday-centred date arithmetic.

"One year" is not a fixed number of days: the library always computes the
distance to the next observed anniversary, so leap years come out exactly.
"""

from datetime import date

from popsim import (days_since_birthday, days_until_birthday, life_year_length,
                    next_birthday)

today = date(2020, 1, 1)
birthdate = date(2000, 3, 15)

ahead = days_until_birthday(today, birthdate)
since = days_since_birthday(today, birthdate)
print(f"born {birthdate}, on {today}:")
print(f"  next birthday {next_birthday(today, birthdate)} in {ahead} days")
print(f"  last birthday was {since} days ago")
print(f"  current life-year spans {life_year_length(today, birthdate)} days "
      "(it contains Feb 29 2020)")

# the partial-year scaling factor used when an agent is created mid life-year
print(f"  remaining-life-year fraction: {ahead / (ahead + since):.4f}")

# Feb-29 birthdays observe Feb 28 in non-leap years
leapling = date(2000, 2, 29)
print(f"\nleapling born {leapling}:")
for year in (2021, 2023, 2024):
    t = date(year, 1, 1)
    print(f"  anniversary observed {next_birthday(t, leapling)}")

# on the anniversary itself the delta rolls over to a full year
t = date(2020, 3, 15)
print(f"\non the anniversary {t}: {days_until_birthday(t, birthdate)} days to the next"
      f" one, {days_since_birthday(t, birthdate)} since the last")
