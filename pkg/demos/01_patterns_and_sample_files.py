"""Link patterns and the sample-data file format.

A link pattern records which of the n sampled sites named a given person,
stored as an n-bit mask (bit i <-> site i).  Sample data holds the per-site
sizes plus three sparse families of pattern counts: people outside the
initial site sample but inside the frame-covered part, the people of each
sampled site (own-site bit always zero), and people outside the frame.
"""

import tempfile

from snowlink import (
    SampleData,
    enumerate_patterns,
    load_sample,
    pattern_to_string,
    save_sample,
)

n = 3
print(f"full pattern space for {n} sites:")
for x in enumerate_patterns(n):
    print(f"  {x:2d} = {pattern_to_string(x, n)}")

print(f"\npatterns available to people of site 1 (own bit forced to zero):")
print(" ", [pattern_to_string(x, n) for x in enumerate_patterns(n, excluded_site=1)])

data = SampleData(
    n=3, N=9, m=(12, 7, 9),
    between1={0b001: 5, 0b011: 2, 0b100: 4},
    within=({0b010: 3}, {0b101: 1}, {0b001: 2}),
    between2={0b010: 6, 0b110: 1},
)
print(f"\nobserved totals: m={data.m_total}, r1={data.r1}, r2={data.r2}, "
      f"per-site linked counts {data.r_within}")

with tempfile.NamedTemporaryFile(suffix=".json", delete=False) as fh:
    path = fh.name
save_sample(data, path)
assert load_sample(path) == data
print(f"\nround-tripped through {path}")
with open(path) as fh:
    print(fh.read())
