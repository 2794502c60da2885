"""One agent's discrete-event simulation, watched event by event.

The Birthday event reschedules itself annually, increments the age, and
draws the demographic events of the upcoming life-year. Terminal events
cancel everything still pending.
"""

from datetime import date

import numpy as np

from popsim import (ModelParameters, ParameterTable, advance, agent_stream,
                    init_agent)

max_age = 100
years = range(2019, 2031)
death = ParameterTable("death", max_age)
death.set_constant(years, ["AT-1"], ("all",), np.full(max_age + 1, 0.08))
birth = ParameterTable("birth", max_age)
fertility = np.zeros(max_age + 1)
fertility[15:50] = 0.25
birth.set_constant(years, ["AT-1"], ("f",), fertility)
params = ModelParameters({"death": death, "birth": birth})

start = date(2020, 1, 1)
agent = init_agent(1, date(1990, 6, 20), "f", "AT-1", start, params,
                   agent_stream(2024, 1))
print(f"created {agent}")
print("initial queue (first partial life-year already drawn):")
for ev in sorted(agent.events):
    print(f"  {ev.due}  {ev.kind.name}")

records, outbox = [], []
trace = lambda a, ev: print(f"  {ev.due}  {ev.kind.name:9s} -> age {a.age}, "
                            f"{'alive' if a.alive else 'removed'}")
print("\nadvancing year by year:")
for year in range(2021, 2031):
    print(f"[through {year}-01-01]")
    advance(agent, date(year, 1, 1), params, records, outbox, listeners=[trace])
    if not agent.alive:
        break

print("\ncensus records produced:")
for metric, when, region, sex, age in records:
    print(f"  {metric} on {when} ({region}, {sex}, age {age})")
print("outbox messages (for the simulation layer):")
for msg in outbox:
    print(f"  {msg.kind} on {msg.date}")
