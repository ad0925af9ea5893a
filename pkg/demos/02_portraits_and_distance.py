"""Comparing two dynamical regimes by the shape of their phase portraits.

A scalar signal is lifted into the plane with one lagged copy, the points
are counted on a grid fitted to the reference, and the distance between two
such histograms is the cheapest way of moving one pile of counts onto the
other.

    python demos/02_portraits_and_distance.py
"""
import numpy as np

from lorenz_ilc import PlantRunSpec, SystemParams, bin_points, embed, emd, integrate, shared_grid
from lorenz_ilc.transport import emd_with_plan

N = 20_000
ref = integrate(PlantRunSpec(n_keep=N, n_discard=N))
points = embed(ref.x, [0.17], ref.dt)
grid = shared_grid(points, bins=20, padding=0.25)
ref_pdf = bin_points(points, grid)


def show(pdf):
    shades = " .:-=+*#%@"
    c = pdf.counts / pdf.counts.max()
    for row in c.T[::-1]:
        print("  " + "".join(shades[min(int(v * 10), 9)] for v in row))


print("reference portrait (x(t) across, x(t - 0.17) up):")
show(ref_pdf)

state = ref.final_state
for rho in (18.0, 28.0, 40.0):
    tr = integrate(PlantRunSpec(params=SystemParams(rho=rho), initial=state, n_keep=N, n_discard=N))
    state = tr.final_state
    pdf = bin_points(embed(tr.x, [0.17], tr.dt), grid)
    print(f"rho={rho:5.1f}  EMD to reference = {emd(pdf, ref_pdf):12.1f}")

# The plan says where the mass went.  Two single-count histograms three
# cells apart along one axis and four along the other cost exactly five
# cell widths.
from lorenz_ilc import BinnedPdf, GridSpec

g = GridSpec((0.0, 0.0), (5.0, 5.0), (5, 5))
a = np.zeros((5, 5)); a[0, 0] = 1
b = np.zeros((5, 5)); b[3, 4] = 1
cost, plan = emd_with_plan(BinnedPdf(g, a), BinnedPdf(g, b))
print("3-4-5 check:", cost, plan.moves)
