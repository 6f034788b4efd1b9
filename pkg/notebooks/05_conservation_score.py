"""
Conservation score
==================

CS = ln(PosScore) - ln|NegScore| - ln(C_n / C_t) / 100, with PosScore and
NegScore the mean positive and mean negative per-position scores.
"""

# %%
import math

from tsk.evaluation import ConservationInput, conservation_score, cs_value, parse_conservation

print(cs_value(math.e, -math.e, 10, 10))
print(cs_value(math.e**2, -math.e, 10, 10))

# %%
# unscored positions count as non-conserved
data = parse_conservation("""
# phyloP-style scores, one or more per line
1.2 0.8 -0.3 NA
2.1 . -0.9 0.4
""")
print(f"C_t={data.total} C_n={data.non_conserved} CS={conservation_score(data):.4f}")

# %%
# more positive mass raises CS, more negative mass lowers it
more = ConservationInput(tuple(s * 2 if s and s > 0 else s for s in data.scores))
print(f"positive scores doubled: CS={conservation_score(more):.4f}")
