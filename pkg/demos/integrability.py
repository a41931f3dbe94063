"""Why commuting fields matter: the textbook pair [d/dq1, q1 d/dq2] = d/dq2.

Sweeping t1 then t2 and sweeping t2 then t1 land on different points; the gap
equals the area of the parameter box.
"""

import logging

from ksym.errors import IntegrabilityError
from ksym.geometry import Dims, KVectorFieldQ, sample_box
from ksym.integrate import GridSpec, commutator_defect, path_independence_defect, solve_characteristics

pair = KVectorFieldQ.from_strings(Dims(2, 2), [["1", "0"], ["0", "q1"]])
print("bracket defect:", commutator_defect(pair, sample_box(-1, 1, 2, points=5)))

spec = GridSpec([0, 0], [1, 1], [8, 8], [0.0, 0.0])
try:
    solve_characteristics(pair, spec)
except IntegrabilityError as exc:
    print("refused:", exc)

# the path check integrates anyway and logs a warning per sweep
logging.getLogger("ksym").setLevel(logging.ERROR)
for side in (0.5, 1.0, 2.0):
    box = GridSpec([0, 0], [side, side], [8, 8], [0.0, 0.0])
    print(f"side {side}: path gap {path_independence_defect(pair, box):.6f}")
