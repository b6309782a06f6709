# %% [markdown]
# # Detector chains and majority voting
#
# Several detectors can report the same misuse. A chain is only useful when
# together its members can report every misuse type, and a reported misuse
# counts as real only when more than half of the chain members able to see
# it agree.

# %%
from fractions import Fraction

from cryptorisk import MisuseTuple, risk_value, validate_chain, vote
from cryptorisk.appir import Loc
from cryptorisk.risk import vote_ratio

for chain in ({"CG"}, {"CC"}, {"BS"}, {"CG", "CC"}):
    print(sorted(chain), validate_chain(chain))

# %% [markdown]
# ## Vote ratios
#
# Only detectors that can report a type take part in its vote. Type 4
# (accept-all hostname verifiers) is invisible to CC, so within
# `CG, CC, BI` one report out of the two able detectors is a tie, and ties
# are rejected.

# %%
print(vote_ratio({"CG", "CC"}, 12, ("CG", "CC", "BS")))  # 2/3, kept
print(vote_ratio({"CG"}, 4, ("CG", "CC", "BI")))  # 1/2, dropped
print(vote_ratio({"CC"}, 8, ("CG", "CC")))  # 1, kept

# %% [markdown]
# ## Effect on the score
#
# Three detectors report into one app. Voting keeps the ECB finding and
# drops a hash finding that only one of three able detectors saw.

# %%
P = "a.Main.run()"


def finding(det, vid, stmt, sinks):
    return MisuseTuple("javax.crypto.Cipher.getInstance(java.lang.String)", vid, P, "", det, Loc(P, stmt), sinks)


by_detector = {
    "CG": [finding("CG", 12, 3, ("NETWORK",))],
    "CC": [finding("CC", 12, 3, ("NETWORK",)), finding("CC", 17, 9, ("LOG",))],
    "BI": [finding("BI", 12, 3, ("NETWORK",))],
}
verdict = vote(by_detector)
print("kept:", [(t.id, sorted(t.reporters)) for t in verdict.expected])
print("dropped:", [(t.id, sorted(t.reporters)) for t in verdict.rejected])
print("R_x with voting:   ", risk_value(verdict.expected, ("CG", "CC", "BI")))
everything = verdict.expected + verdict.rejected
print("R_x without voting:", risk_value(everything, ("CG", "CC", "BI")))
assert verdict.ratios[everything[0].key] == Fraction(1)
