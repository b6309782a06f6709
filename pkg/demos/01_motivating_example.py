# %% [markdown]
# # One misuse, two flows
#
# A small sender class encrypts a string with `Cipher.getInstance("AES")`,
# then sends the ciphertext over HTTP and writes it to a file. With no mode
# given the provider falls back to ECB. This walk-through finds that misuse,
# follows the ciphertext to both sinks and turns the result into a risk score.

# %%
from cryptorisk import AppRiskReport, annotate_with_flows, detect, ds_track
from cryptorisk.appir import dump_program
from cryptorisk.fixtures import motivating_example

program = motivating_example()
print(dump_program(program)[:400], "...")

# %% [markdown]
# ## Detection
#
# The built-in rules (detector id `BI`) resolve the transformation string by
# constant propagation and flag ECB.

# %%
misuses = detect(program)
for t in misuses:
    print(t.id, t.p, t.loc.stmt, "|", t.d)

# %% [markdown]
# ## Flows to sinks
#
# `getInstance` is a parameter-related API, so tracking starts from the
# data-related calls it taints (`doFinal`). Each reached sink is
# categorised by walking back over the types feeding it: the
# `DataOutputStream.write` in `send` sits on an `HttpURLConnection`, so it
# counts as NETWORK rather than a plain stream.

# %%
ann = annotate_with_flows(misuses, program)
for t in ann.tuples:
    print(t.id, "->", t.S)
for rec in ann.flows:
    print(f"  {rec.source.method}#{rec.source.stmt} -> {rec.sink.method}#{rec.sink.stmt}: {rec.category}")
    print("     ds_track says", ds_track(program, rec.sink))

# %% [markdown]
# ## Risk
#
# ECB has severity 7; NETWORK and FILE weigh 10 and 5, so the app scores
# 7 * (10 + 5) = 105.

# %%
report = AppRiskReport.build(program.app_id, ann.tuples, ("CG", "CC", "BI"), ("BI",))
print("R_x =", report.R_x)
print(report.dumps())
